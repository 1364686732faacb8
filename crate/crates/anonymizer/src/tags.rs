//! Tags and the small data dictionary needed for implicit-VR files and
//! human-readable audit column names.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag(pub u16, pub u16);

impl Tag {
    pub const ITEM: Tag = Tag(0xFFFE, 0xE000);
    pub const ITEM_END: Tag = Tag(0xFFFE, 0xE00D);
    pub const SEQUENCE_END: Tag = Tag(0xFFFE, 0xE0DD);

    pub const TRANSFER_SYNTAX: Tag = Tag(0x0002, 0x0010);
    pub const SOP_INSTANCE_UID: Tag = Tag(0x0008, 0x0018);
    pub const ACCESSION_NUMBER: Tag = Tag(0x0008, 0x0050);
    pub const STUDY_DESCRIPTION: Tag = Tag(0x0008, 0x1030);
    pub const PATIENT_NAME: Tag = Tag(0x0010, 0x0010);
    pub const PATIENT_ID: Tag = Tag(0x0010, 0x0020);
    pub const PATIENT_BIRTH_DATE: Tag = Tag(0x0010, 0x0030);
    pub const STUDY_INSTANCE_UID: Tag = Tag(0x0020, 0x000D);
    pub const SERIES_INSTANCE_UID: Tag = Tag(0x0020, 0x000E);
    pub const PIXEL_DATA: Tag = Tag(0x7FE0, 0x0010);

    pub fn group(self) -> u16 {
        self.0
    }

    pub fn element(self) -> u16 {
        self.1
    }

    /// Dictionary name, or `(gggg,eeee)` for tags not in the table.
    pub fn name(self) -> String {
        match lookup(self) {
            Some(e) => e.name.to_string(),
            None => self.to_string(),
        }
    }

    /// VR used when reading implicit-VR data.
    pub fn implicit_vr(self) -> [u8; 2] {
        if self.1 == 0 {
            return *b"UL";
        }
        lookup(self).map(|e| *e.vr).unwrap_or(*b"UN")
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:04X},{:04X})", self.0, self.1)
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Parses `(gggg,eeee)`; anything after the closing parenthesis and a space
/// (such as a trailing keyword) is ignored.
impl FromStr for Tag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let head = s.trim().split(' ').next().unwrap_or("");
        let inner = head.strip_prefix('(').and_then(|h| h.strip_suffix(')')).ok_or(())?;
        let (g, e) = inner.split_once(',').ok_or(())?;
        let parse = |x: &str| {
            let x = x.trim();
            if x.is_empty() || x.len() > 4 || !x.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(());
            }
            u16::from_str_radix(x, 16).map_err(|_| ())
        };
        Ok(Tag(parse(g)?, parse(e)?))
    }
}

struct Entry {
    tag: Tag,
    vr: &'static [u8; 2],
    name: &'static str,
}

macro_rules! dict {
    ($(($g:expr, $e:expr, $vr:expr, $name:expr)),* $(,)?) => {
        &[$(Entry { tag: Tag($g, $e), vr: $vr, name: $name }),*]
    };
}

static DICTIONARY: &[Entry] = dict![
    (0x0002, 0x0001, b"OB", "File Meta Information Version"),
    (0x0002, 0x0002, b"UI", "Media Storage SOP Class UID"),
    (0x0002, 0x0003, b"UI", "Media Storage SOP Instance UID"),
    (0x0002, 0x0010, b"UI", "Transfer Syntax UID"),
    (0x0002, 0x0012, b"UI", "Implementation Class UID"),
    (0x0002, 0x0013, b"SH", "Implementation Version Name"),
    (0x0008, 0x0005, b"CS", "Specific Character Set"),
    (0x0008, 0x0008, b"CS", "Image Type"),
    (0x0008, 0x0016, b"UI", "SOP Class UID"),
    (0x0008, 0x0018, b"UI", "SOP Instance UID"),
    (0x0008, 0x0020, b"DA", "Study Date"),
    (0x0008, 0x0021, b"DA", "Series Date"),
    (0x0008, 0x0022, b"DA", "Acquisition Date"),
    (0x0008, 0x0023, b"DA", "Content Date"),
    (0x0008, 0x0030, b"TM", "Study Time"),
    (0x0008, 0x0031, b"TM", "Series Time"),
    (0x0008, 0x0050, b"SH", "Accession Number"),
    (0x0008, 0x0060, b"CS", "Modality"),
    (0x0008, 0x0070, b"LO", "Manufacturer"),
    (0x0008, 0x0080, b"LO", "Institution Name"),
    (0x0008, 0x0081, b"ST", "Institution Address"),
    (0x0008, 0x0090, b"PN", "Referring Physician's Name"),
    (0x0008, 0x1010, b"SH", "Station Name"),
    (0x0008, 0x1030, b"LO", "Study Description"),
    (0x0008, 0x103E, b"LO", "Series Description"),
    (0x0008, 0x1040, b"LO", "Institutional Department Name"),
    (0x0008, 0x1050, b"PN", "Performing Physician's Name"),
    (0x0008, 0x1070, b"PN", "Operators' Name"),
    (0x0008, 0x1110, b"SQ", "Referenced Study Sequence"),
    (0x0008, 0x1140, b"SQ", "Referenced Image Sequence"),
    (0x0010, 0x0010, b"PN", "Patient's Name"),
    (0x0010, 0x0020, b"LO", "Patient ID"),
    (0x0010, 0x0030, b"DA", "Patient's Birth Date"),
    (0x0010, 0x0040, b"CS", "Patient's Sex"),
    (0x0010, 0x1000, b"LO", "Other Patient IDs"),
    (0x0010, 0x1010, b"AS", "Patient's Age"),
    (0x0010, 0x1030, b"DS", "Patient's Weight"),
    (0x0010, 0x1040, b"LO", "Patient's Address"),
    (0x0010, 0x2154, b"SH", "Patient's Telephone Numbers"),
    (0x0018, 0x0015, b"CS", "Body Part Examined"),
    (0x0018, 0x1000, b"LO", "Device Serial Number"),
    (0x0018, 0x5101, b"CS", "View Position"),
    (0x0020, 0x000D, b"UI", "Study Instance UID"),
    (0x0020, 0x000E, b"UI", "Series Instance UID"),
    (0x0020, 0x0010, b"SH", "Study ID"),
    (0x0020, 0x0011, b"IS", "Series Number"),
    (0x0020, 0x0013, b"IS", "Instance Number"),
    (0x0028, 0x0002, b"US", "Samples per Pixel"),
    (0x0028, 0x0004, b"CS", "Photometric Interpretation"),
    (0x0028, 0x0010, b"US", "Rows"),
    (0x0028, 0x0011, b"US", "Columns"),
    (0x0028, 0x0100, b"US", "Bits Allocated"),
    (0x0028, 0x0101, b"US", "Bits Stored"),
    (0x0028, 0x0102, b"US", "High Bit"),
    (0x0028, 0x0103, b"US", "Pixel Representation"),
    (0x7FE0, 0x0010, b"OW", "Pixel Data"),
];

fn lookup(tag: Tag) -> Option<&'static Entry> {
    DICTIONARY.iter().find(|e| e.tag == tag)
}

/// VRs whose value is character data.
pub fn is_text_vr(vr: [u8; 2]) -> bool {
    matches!(
        &vr,
        b"AE" | b"AS" | b"CS" | b"DA" | b"DS" | b"DT" | b"IS" | b"LO" | b"LT" | b"PN" | b"SH" | b"ST"
            | b"TM" | b"UC" | b"UI" | b"UR" | b"UT"
    )
}

/// Explicit-VR encodings with a 4-byte length field.
pub fn has_long_length(vr: [u8; 2]) -> bool {
    matches!(
        &vr,
        b"OB" | b"OD" | b"OF" | b"OL" | b"OV" | b"OW" | b"SQ" | b"SV" | b"UC" | b"UN" | b"UR" | b"UT" | b"UV"
    )
}
