//! Minimal DICOM Part-10 reader and writer.
//!
//! Top-level data elements are kept as their original encoded bytes, so a
//! file written back without edits is byte-identical to the input. Nested
//! sequences, items and encapsulated pixel data are walked only to find
//! their end. Explicit and implicit VR little endian are supported; big
//! endian and deflated transfer syntaxes are rejected.

use crate::error::{Error, Result};
use crate::tags::{has_long_length, is_text_vr, Tag};

pub const PREAMBLE_LEN: usize = 128;
pub const MAGIC: &[u8; 4] = b"DICM";
const UNDEFINED: u32 = 0xFFFF_FFFF;

pub const IMPLICIT_VR_LE: &str = "1.2.840.10008.1.2";
pub const EXPLICIT_VR_LE: &str = "1.2.840.10008.1.2.1";
const EXPLICIT_VR_BE: &str = "1.2.840.10008.1.2.2";
const DEFLATED_LE: &str = "1.2.840.10008.1.2.1.99";

/// `true` when `bytes` carry the 128-byte preamble followed by `DICM`.
pub fn has_magic(bytes: &[u8]) -> bool {
    bytes.len() >= PREAMBLE_LEN + 4 && &bytes[PREAMBLE_LEN..PREAMBLE_LEN + 4] == MAGIC
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    ExplicitLe,
    ImplicitLe,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub tag: Tag,
    pub vr: [u8; 2],
    /// `None` for undefined length.
    pub length: Option<u32>,
    header_len: usize,
    raw: Vec<u8>,
}

impl Element {
    /// Value bytes, including any padding; `None` for undefined length.
    pub fn value(&self) -> Option<&[u8]> {
        self.length.map(|n| &self.raw[self.header_len..self.header_len + n as usize])
    }

    /// Full encoding, header included.
    pub fn raw(&self) -> &[u8] {
        &self.raw
    }

    /// Character value with trailing space/NUL padding removed. `None` for
    /// non-text VRs, undefined lengths and invalid UTF-8.
    pub fn text(&self) -> Option<&str> {
        if !is_text_vr(self.vr) {
            return None;
        }
        let s = std::str::from_utf8(self.value()?).ok()?;
        Some(s.trim_end_matches([' ', '\0']))
    }

    /// Encodes `value`, padding to even length with a space (text VRs other
    /// than UI) or NUL.
    pub fn encode(tag: Tag, vr: [u8; 2], value: &[u8], encoding: Encoding) -> Result<Element> {
        let mut value = value.to_vec();
        if value.len() % 2 == 1 {
            value.push(if is_text_vr(vr) && &vr != b"UI" { b' ' } else { 0 });
        }
        let len = value.len();
        let mut raw = Vec::with_capacity(len + 12);
        raw.extend(tag.0.to_le_bytes());
        raw.extend(tag.1.to_le_bytes());
        match encoding {
            Encoding::ImplicitLe => raw.extend((len as u32).to_le_bytes()),
            Encoding::ExplicitLe => {
                raw.extend(vr);
                if has_long_length(vr) {
                    raw.extend([0, 0]);
                    raw.extend((len as u32).to_le_bytes());
                } else {
                    let short = u16::try_from(len)
                        .map_err(|_| Error::Unreadable(format!("{len}-byte value too long for VR {}", vr_str(vr))))?;
                    raw.extend(short.to_le_bytes());
                }
            }
        }
        let header_len = raw.len();
        raw.extend(value);
        Ok(Element { tag, vr, length: Some(len as u32), header_len, raw })
    }
}

fn vr_str(vr: [u8; 2]) -> String {
    String::from_utf8_lossy(&vr).into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DicomFile {
    preamble: Vec<u8>,
    meta: Vec<Element>,
    pub encoding: Encoding,
    dataset: Vec<Element>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Unreadable(format!("truncated data at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn tag(&mut self) -> Result<Tag> {
        Ok(Tag(self.u16()?, self.u16()?))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    /// Reads one element header, returning (tag, vr, length).
    fn header(&mut self, encoding: Encoding) -> Result<(Tag, [u8; 2], u32)> {
        let tag = self.tag()?;
        if tag.0 == 0xFFFE {
            return Ok((tag, *b"  ", self.u32()?));
        }
        match encoding {
            Encoding::ImplicitLe => Ok((tag, tag.implicit_vr(), self.u32()?)),
            Encoding::ExplicitLe => {
                let v = self.take(2)?;
                let vr = [v[0], v[1]];
                if !vr.iter().all(|b| b.is_ascii_uppercase()) {
                    return Err(Error::Unreadable(format!("bad VR {:?} for {tag}", vr_str(vr))));
                }
                let len = if has_long_length(vr) {
                    self.take(2)?;
                    self.u32()?
                } else {
                    self.u16()? as u32
                };
                Ok((tag, vr, len))
            }
        }
    }

    /// Skips the content of an undefined-length sequence or encapsulated
    /// pixel data, up to and including its sequence delimiter.
    fn skip_undefined_sequence(&mut self, encoding: Encoding, depth: usize) -> Result<()> {
        if depth > 64 {
            return Err(Error::Unreadable("sequences nested too deeply".into()));
        }
        loop {
            let tag = self.tag()?;
            let len = self.u32()?;
            match tag {
                Tag::SEQUENCE_END => return Ok(()),
                Tag::ITEM if len == UNDEFINED => self.skip_undefined_item(encoding, depth + 1)?,
                Tag::ITEM => {
                    self.take(len as usize)?;
                }
                other => {
                    return Err(Error::Unreadable(format!("unexpected {other} inside a sequence")));
                }
            }
        }
    }

    fn skip_undefined_item(&mut self, encoding: Encoding, depth: usize) -> Result<()> {
        loop {
            let (tag, _, len) = self.header(encoding)?;
            if tag == Tag::ITEM_END {
                return Ok(());
            }
            if len == UNDEFINED {
                self.skip_undefined_sequence(encoding, depth + 1)?;
            } else {
                self.take(len as usize)?;
            }
        }
    }

    fn element(&mut self, encoding: Encoding) -> Result<Element> {
        let start = self.pos;
        let (tag, vr, len) = self.header(encoding)?;
        let header_len = self.pos - start;
        let length = if len == UNDEFINED {
            self.skip_undefined_sequence(encoding, 0)?;
            None
        } else {
            self.take(len as usize)?;
            Some(len)
        };
        Ok(Element { tag, vr, length, header_len, raw: self.bytes[start..self.pos].to_vec() })
    }
}

impl DicomFile {
    pub fn parse(bytes: &[u8]) -> Result<DicomFile> {
        if !has_magic(bytes) {
            return Err(Error::Unreadable("missing DICM header".into()));
        }
        let mut r = Reader { bytes, pos: PREAMBLE_LEN + 4 };
        let mut meta = Vec::new();
        while !r.at_end() && r.bytes.len() - r.pos >= 2 && u16::from_le_bytes([r.bytes[r.pos], r.bytes[r.pos + 1]]) == 2 {
            meta.push(r.element(Encoding::ExplicitLe)?);
        }
        let ts = meta
            .iter()
            .find(|e| e.tag == Tag::TRANSFER_SYNTAX)
            .and_then(|e| e.text().map(str::to_string));
        let encoding = match ts.as_deref() {
            Some(IMPLICIT_VR_LE) => Encoding::ImplicitLe,
            Some(t @ (EXPLICIT_VR_BE | DEFLATED_LE)) => {
                return Err(Error::UnsupportedTransferSyntax(t.to_string()))
            }
            Some(_) => Encoding::ExplicitLe,
            // no transfer syntax: sniff for an explicit VR after the first tag
            None => {
                let b = &bytes[r.pos.min(bytes.len())..];
                if b.len() >= 6 && b[4].is_ascii_uppercase() && b[5].is_ascii_uppercase() {
                    Encoding::ExplicitLe
                } else {
                    Encoding::ImplicitLe
                }
            }
        };
        let mut dataset = Vec::new();
        while !r.at_end() {
            let e = r.element(encoding)?;
            if let Some(prev) = dataset.last().map(|p: &Element| p.tag) {
                if e.tag <= prev {
                    return Err(Error::Unreadable(format!("{} follows {prev} out of order", e.tag)));
                }
            }
            dataset.push(e);
        }
        Ok(DicomFile { preamble: bytes[..PREAMBLE_LEN].to_vec(), meta, encoding, dataset })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.preamble.clone();
        out.extend(MAGIC);
        for e in self.meta.iter().chain(&self.dataset) {
            out.extend(e.raw());
        }
        out
    }

    /// Top-level data set element (file meta excluded).
    pub fn get(&self, tag: Tag) -> Option<&Element> {
        self.dataset.binary_search_by(|e| e.tag.cmp(&tag)).ok().map(|i| &self.dataset[i])
    }

    pub fn text(&self, tag: Tag) -> Option<&str> {
        self.get(tag).and_then(Element::text)
    }

    pub fn elements(&self) -> &[Element] {
        &self.dataset
    }

    /// Replaces the value of an existing element, keeping its VR. Undefined
    /// length elements become empty defined-length ones.
    pub fn set_value(&mut self, tag: Tag, value: &[u8]) -> Result<()> {
        let i = self
            .dataset
            .binary_search_by(|e| e.tag.cmp(&tag))
            .map_err(|_| Error::Unreadable(format!("{tag} not present")))?;
        let vr = self.dataset[i].vr;
        self.dataset[i] = Element::encode(tag, vr, value, self.encoding)?;
        Ok(())
    }
}

/// Builds Part-10 files element by element. Used for fixtures and tests.
#[derive(Debug, Clone)]
pub struct FileBuilder {
    encoding: Encoding,
    elements: Vec<(Tag, [u8; 2], Vec<u8>)>,
    raw: Vec<(Tag, Vec<u8>)>,
}

impl FileBuilder {
    pub fn new(encoding: Encoding) -> Self {
        FileBuilder { encoding, elements: Vec::new(), raw: Vec::new() }
    }

    pub fn text(mut self, tag: Tag, vr: &[u8; 2], value: &str) -> Self {
        self.elements.push((tag, *vr, value.as_bytes().to_vec()));
        self
    }

    pub fn bytes(mut self, tag: Tag, vr: &[u8; 2], value: &[u8]) -> Self {
        self.elements.push((tag, *vr, value.to_vec()));
        self
    }

    pub fn u16(self, tag: Tag, value: u16) -> Self {
        self.bytes(tag, b"US", &value.to_le_bytes())
    }

    /// Adds already-encoded element bytes (for sequences and encapsulated
    /// pixel data).
    pub fn raw(mut self, tag: Tag, encoded: Vec<u8>) -> Self {
        self.raw.push((tag, encoded));
        self
    }

    pub fn build(self) -> Vec<u8> {
        let ts = match self.encoding {
            Encoding::ExplicitLe => EXPLICIT_VR_LE,
            Encoding::ImplicitLe => IMPLICIT_VR_LE,
        };
        let meta_body: Vec<u8> = [
            Element::encode(Tag(0x0002, 0x0001), *b"OB", &[0, 1], Encoding::ExplicitLe),
            Element::encode(Tag(0x0002, 0x0002), *b"UI", b"1.2.840.10008.5.1.4.1.1.1.1", Encoding::ExplicitLe),
            Element::encode(Tag(0x0002, 0x0003), *b"UI", b"1.2.3.4.5.6.7.8", Encoding::ExplicitLe),
            Element::encode(Tag::TRANSFER_SYNTAX, *b"UI", ts.as_bytes(), Encoding::ExplicitLe),
        ]
        .into_iter()
        .flat_map(|e| e.expect("meta fits").raw)
        .collect();
        let group_len =
            Element::encode(Tag(0x0002, 0x0000), *b"UL", &(meta_body.len() as u32).to_le_bytes(), Encoding::ExplicitLe)
                .expect("fits");

        let mut body: Vec<(Tag, Vec<u8>)> = self
            .elements
            .into_iter()
            .map(|(t, vr, v)| (t, Element::encode(t, vr, &v, self.encoding).expect("value fits").raw))
            .chain(self.raw)
            .collect();
        body.sort_by_key(|(t, _)| *t);

        let mut out = vec![0u8; PREAMBLE_LEN];
        out.extend(MAGIC);
        out.extend(group_len.raw);
        out.extend(meta_body);
        for (_, b) in body {
            out.extend(b);
        }
        out
    }
}

/// Encapsulated (undefined-length OB) pixel data with an empty offset table
/// and the given fragments.
pub fn encapsulated_pixel_data(fragments: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(0x7FE0u16.to_le_bytes());
    out.extend(0x0010u16.to_le_bytes());
    out.extend(b"OB");
    out.extend([0, 0]);
    out.extend(UNDEFINED.to_le_bytes());
    let item = |out: &mut Vec<u8>, data: &[u8]| {
        out.extend(0xFFFEu16.to_le_bytes());
        out.extend(0xE000u16.to_le_bytes());
        out.extend((data.len() as u32).to_le_bytes());
        out.extend(data);
    };
    item(&mut out, &[]);
    for f in fragments {
        item(&mut out, f);
    }
    out.extend(0xFFFEu16.to_le_bytes());
    out.extend(0xE0DDu16.to_le_bytes());
    out.extend(0u32.to_le_bytes());
    out
}

/// Explicit-VR undefined-length sequence holding one undefined-length item
/// with the given text elements.
pub fn undefined_length_sequence(tag: Tag, items: &[(Tag, [u8; 2], &str)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(tag.0.to_le_bytes());
    out.extend(tag.1.to_le_bytes());
    out.extend(b"SQ");
    out.extend([0, 0]);
    out.extend(UNDEFINED.to_le_bytes());
    out.extend(0xFFFEu16.to_le_bytes());
    out.extend(0xE000u16.to_le_bytes());
    out.extend(UNDEFINED.to_le_bytes());
    for (t, vr, v) in items {
        out.extend(Element::encode(*t, *vr, v.as_bytes(), Encoding::ExplicitLe).expect("fits").raw);
    }
    out.extend(0xFFFEu16.to_le_bytes());
    out.extend(0xE00Du16.to_le_bytes());
    out.extend(0u32.to_le_bytes());
    out.extend(0xFFFEu16.to_le_bytes());
    out.extend(0xE0DDu16.to_le_bytes());
    out.extend(0u32.to_le_bytes());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(encoding: Encoding) -> Vec<u8> {
        FileBuilder::new(encoding)
            .text(Tag::PATIENT_NAME, b"PN", "Doe^Jane")
            .text(Tag::PATIENT_ID, b"LO", "P001")
            .text(Tag::ACCESSION_NUMBER, b"SH", "ACC123")
            .text(Tag::SOP_INSTANCE_UID, b"UI", "1.2.3.4.5")
            .u16(Tag(0x0028, 0x0010), 2)
            .u16(Tag(0x0028, 0x0011), 2)
            .bytes(Tag::PIXEL_DATA, b"OW", &[1, 2, 3, 4, 5, 6, 7, 8])
            .build()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for enc in [Encoding::ExplicitLe, Encoding::ImplicitLe] {
            let bytes = sample(enc);
            let f = DicomFile::parse(&bytes).unwrap();
            assert_eq!(f.encoding, enc);
            assert_eq!(f.to_bytes(), bytes);
            assert_eq!(f.text(Tag::PATIENT_ID), Some("P001"));
            assert_eq!(f.text(Tag::SOP_INSTANCE_UID), Some("1.2.3.4.5"));
            assert_eq!(f.get(Tag::PIXEL_DATA).unwrap().value(), Some(&[1u8, 2, 3, 4, 5, 6, 7, 8][..]));
        }
    }

    #[test]
    fn undefined_lengths_are_skipped_and_preserved() {
        let bytes = FileBuilder::new(Encoding::ExplicitLe)
            .text(Tag::PATIENT_ID, b"LO", "P9")
            .raw(Tag(0x0008, 0x1140), undefined_length_sequence(Tag(0x0008, 0x1140), &[(Tag::SOP_INSTANCE_UID, *b"UI", "1.2")]))
            .raw(Tag::PIXEL_DATA, encapsulated_pixel_data(&[b"abcd", b"efgh"]))
            .build();
        let f = DicomFile::parse(&bytes).unwrap();
        assert_eq!(f.to_bytes(), bytes);
        assert_eq!(f.get(Tag::PIXEL_DATA).unwrap().length, None);
        assert_eq!(f.get(Tag(0x0008, 0x1140)).unwrap().vr, *b"SQ");
    }

    #[test]
    fn set_value_pads() {
        let mut f = DicomFile::parse(&sample(Encoding::ExplicitLe)).unwrap();
        f.set_value(Tag::PATIENT_ID, b"XYZ").unwrap();
        assert_eq!(f.get(Tag::PATIENT_ID).unwrap().value(), Some(&b"XYZ "[..]));
        assert_eq!(f.text(Tag::PATIENT_ID), Some("XYZ"));
        f.set_value(Tag::SOP_INSTANCE_UID, b"1.2.3").unwrap();
        assert_eq!(f.get(Tag::SOP_INSTANCE_UID).unwrap().value(), Some(&b"1.2.3\0"[..]));
        let reparsed = DicomFile::parse(&f.to_bytes()).unwrap();
        assert_eq!(reparsed, f);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DicomFile::parse(b"not dicom").is_err());
        let mut bytes = sample(Encoding::ExplicitLe);
        bytes.truncate(bytes.len() - 3);
        assert!(DicomFile::parse(&bytes).is_err());
        let mut bytes = vec![0u8; 128];
        bytes.extend(MAGIC);
        bytes.extend(Element::encode(Tag::TRANSFER_SYNTAX, *b"UI", EXPLICIT_VR_BE.as_bytes(), Encoding::ExplicitLe).unwrap().raw);
        assert!(matches!(DicomFile::parse(&bytes), Err(Error::UnsupportedTransferSyntax(_))));
    }
}
