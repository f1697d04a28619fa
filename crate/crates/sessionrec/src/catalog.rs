//! Dense-id catalog for users, tracks and artists.
//!
//! Raw string keys from the input files are interned to contiguous integer
//! ids in order of first appearance, so every downstream structure can use
//! plain vectors instead of string maps.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(
    /// Dense user id.
    UserId
);
id_type!(
    /// Dense track id.
    ItemId
);
id_type!(
    /// Dense artist id.
    ArtistId
);
id_type!(
    /// Dense tag id within a vocabulary.
    TagId
);

/// Bijection between raw string keys and dense ids.
#[derive(Debug, Clone, Default)]
pub struct Interner {
    index: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Intern `raw`, returning its dense id (existing or freshly assigned).
    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&id) = self.index.get(raw) {
            return id;
        }
        let id = self.names.len() as u32;
        self.index.insert(raw.to_owned(), id);
        self.names.push(raw.to_owned());
        id
    }

    pub fn get(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Raw keys in dense-id order.
    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// The id universe of one dataset: users, tracks, artists and the
/// track-to-artist map.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub users: Interner,
    pub items: Interner,
    pub artists: Interner,
    track_to_artist: Vec<ArtistId>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern_user(&mut self, raw: &str) -> UserId {
        UserId(self.users.intern(raw))
    }

    pub fn intern_artist(&mut self, raw: &str) -> ArtistId {
        ArtistId(self.artists.intern(raw))
    }

    /// Intern a track together with its artist. The first artist seen for a
    /// track wins; later occurrences do not rebind it.
    pub fn intern_track(&mut self, raw: &str, artist: ArtistId) -> ItemId {
        let id = self.items.intern(raw);
        if id as usize == self.track_to_artist.len() {
            self.track_to_artist.push(artist);
        }
        ItemId(id)
    }

    pub fn artist_of(&self, item: ItemId) -> ArtistId {
        self.track_to_artist[item.index()]
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_artists(&self) -> usize {
        self.artists.len()
    }

    /// Persist the catalog as three text files in `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        write_lines(&dir.join("users.tsv"), self.users.names().iter())?;
        write_lines(&dir.join("artists.tsv"), self.artists.names().iter())?;
        let items = self
            .items
            .names()
            .iter()
            .enumerate()
            .map(|(i, raw)| format!("{raw}\t{}", self.artists.name(self.track_to_artist[i].0)));
        write_lines_owned(&dir.join("items.tsv"), items)?;
        Ok(())
    }

    /// Reload a catalog persisted by [`Catalog::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut catalog = Catalog::new();
        for line in read_lines(&dir.join("users.tsv"))? {
            catalog.intern_user(&line?);
        }
        for line in read_lines(&dir.join("artists.tsv"))? {
            catalog.intern_artist(&line?);
        }
        for line in read_lines(&dir.join("items.tsv"))? {
            let line = line?;
            let (track, artist) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("items.tsv: missing artist: {line:?}")))?;
            let artist = catalog
                .artists
                .get(artist)
                .map(ArtistId)
                .ok_or_else(|| Error::Format(format!("items.tsv: unknown artist {artist:?}")))?;
            catalog.intern_track(track, artist);
        }
        Ok(catalog)
    }
}

fn write_lines<'a>(path: &Path, lines: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| Error::IoPath {
        path: path.to_owned(),
        source: e,
    })?);
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_lines_owned(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| Error::IoPath {
        path: path.to_owned(),
        source: e,
    })?);
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    let file = fs::File::open(path).map_err(|e| Error::IoPath {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(BufReader::new(file).lines())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_dense_and_stable() {
        let mut i = Interner::new();
        assert_eq!(i.intern("a"), 0);
        assert_eq!(i.intern("b"), 1);
        assert_eq!(i.intern("a"), 0);
        assert_eq!(i.name(1), "b");
        assert_eq!(i.len(), 2);
    }

    #[test]
    fn track_keeps_first_artist() {
        let mut c = Catalog::new();
        let a0 = c.intern_artist("x");
        let a1 = c.intern_artist("y");
        let t = c.intern_track("t", a0);
        assert_eq!(c.intern_track("t", a1), t);
        assert_eq!(c.artist_of(t), a0);
    }

    #[test]
    fn catalog_roundtrip() {
        let mut c = Catalog::new();
        c.intern_user("u1");
        c.intern_user("u2");
        let a = c.intern_artist("artist one");
        c.intern_track("track/1", a);
        let dir = tempfile::tempdir().unwrap();
        c.write_dir(dir.path()).unwrap();
        let back = Catalog::read_dir(dir.path()).unwrap();
        assert_eq!(back.users.names(), c.users.names());
        assert_eq!(back.items.names(), c.items.names());
        assert_eq!(back.artist_of(ItemId(0)), a);
    }
}
