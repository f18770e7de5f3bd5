//! Little-endian binary encoding shared by the `.bin`, dataset and model file formats.
//!
//! Every read is bounds-checked against the remaining input, and length
//! prefixes are validated before any allocation, so corrupt or hostile files
//! produce [`Error::Format`] instead of panics or huge allocations.

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_magic(magic: &[u8]) -> Self {
        let mut w = Self::new();
        w.buf.extend_from_slice(magic);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Raw floats, no length prefix.
    pub fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.f64(*v);
        }
    }

    /// Length-prefixed floats.
    pub fn f64_vec(&mut self, vs: &[f64]) {
        self.usize(vs.len());
        self.f64s(vs);
    }

    pub fn usize_vec(&mut self, vs: &[usize]) {
        self.usize(vs.len());
        for v in vs {
            self.usize(*v);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    /// Consumes `magic` or fails with a version/format error.
    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        let got = self.take(magic.len())?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Format(format!(
                "truncated input: need {n} bytes at offset {}, have {}",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn i64(&mut self) -> Result<i64> {
        let b = self.take(8)?;
        Ok(i64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("count {v} does not fit in usize")))
    }

    /// A count of items that each occupy at least `item_bytes` in the rest of the input.
    pub fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.usize()?;
        self.check_room(n, item_bytes)?;
        Ok(n)
    }

    pub fn check_room(&self, n: usize, item_bytes: usize) -> Result<()> {
        let need = n.checked_mul(item_bytes.max(1));
        match need {
            Some(need) if need <= self.remaining() => Ok(()),
            _ => Err(Error::Format(format!(
                "declared {n} items of {item_bytes} bytes but only {} bytes remain",
                self.remaining()
            ))),
        }
    }

    pub fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        self.check_room(n, 8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let n = self.count(8)?;
        self.f64s(n)
    }

    pub fn usize_vec(&mut self) -> Result<Vec<usize>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.count(1)?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format("string is not valid UTF-8".into()))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    /// Fails if unread bytes remain.
    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_reads_fail() {
        let mut w = Writer::with_magic(b"ABC");
        w.f64_vec(&[1.0, 2.0]);
        let bytes = w.into_inner();
        let mut r = Reader::new(&bytes[..bytes.len() - 1]);
        r.expect_magic(b"ABC").unwrap();
        assert!(matches!(r.f64_vec(), Err(Error::Format(_))));
    }

    #[test]
    fn huge_count_is_rejected_before_allocation() {
        let mut w = Writer::new();
        w.u64(u64::MAX / 2);
        let bytes = w.into_inner();
        let mut r = Reader::new(&bytes);
        assert!(r.f64_vec().is_err());
    }

    #[test]
    fn bad_magic() {
        let mut r = Reader::new(b"XXXX1");
        assert!(r.expect_magic(b"TFSS1").is_err());
    }
}
