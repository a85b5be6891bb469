//! Binary corpus cache.
//!
//! Layout, all integers little-endian: magic `b"LTMD"`, format version u32,
//! `l_seq` u64, then the train block followed by the test block. Each block
//! is a u64 series count and, per series: u32 source length + source bytes,
//! u32 id length + id bytes, u64 pad length, u64 value count, f64 values.
//! Writing the same corpus twice produces identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Corpus, DataError, PaddedSeries};

const MAGIC: &[u8; 4] = b"LTMD";
const FORMAT_VERSION: u32 = 1;

pub fn save_cache(path: &Path, corpus: &Corpus) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(corpus.l_seq as u64).to_le_bytes())?;
    for block in [&corpus.train, &corpus.test] {
        w.write_all(&(block.len() as u64).to_le_bytes())?;
        for s in block {
            for text in [&s.source, &s.id] {
                w.write_all(&(text.len() as u32).to_le_bytes())?;
                w.write_all(text.as_bytes())?;
            }
            w.write_all(&(s.pad_len as u64).to_le_bytes())?;
            w.write_all(&(s.values.len() as u64).to_le_bytes())?;
            for &v in &s.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_cache(path: &Path) -> Result<Corpus, DataError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(DataError::Format("bad magic, not a corpus cache".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(DataError::Format(format!(
            "unsupported cache version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let l_seq = read_u64(&mut r)? as usize;
    let mut blocks = Vec::with_capacity(2);
    for _ in 0..2 {
        let count = read_u64(&mut r)? as usize;
        let mut block = Vec::with_capacity(count);
        for _ in 0..count {
            let source = read_string(&mut r)?;
            let id = read_string(&mut r)?;
            let pad_len = read_u64(&mut r)? as usize;
            let n = read_u64(&mut r)? as usize;
            let mut values = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                read_exact(&mut r, &mut buf)?;
                values.push(f64::from_le_bytes(buf));
            }
            if pad_len > values.len() {
                return Err(DataError::Format(format!(
                    "series {id}: pad length {pad_len} exceeds value count {n}"
                )));
            }
            block.push(PaddedSeries {
                source,
                id,
                values,
                pad_len,
            });
        }
        blocks.push(block);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DataError::Format("trailing bytes after test block".into()));
    }
    let test = blocks.pop().expect("two blocks read");
    let train = blocks.pop().expect("two blocks read");
    Ok(Corpus { l_seq, train, test })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), DataError> {
    r.read_exact(buf)
        .map_err(|_| DataError::Format("unexpected end of file".into()))
}

fn read_u32(r: &mut impl Read) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, DataError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_string(r: &mut impl Read) -> Result<String, DataError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| DataError::Format("string is not UTF-8".into()))
}
