//! Envelope framing.
//!
//! Every message is a 25-byte little-endian header followed by the payload:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MWB1" (4D 57 42 31)
//!      4     4  tag            u32
//!      8     4  source rank    u32
//!     12     4  dest rank      u32
//!     16     1  payload kind   u8   0 = INT64_SCALAR, 1 = FLOAT64_ARRAY
//!     17     8  element count  u64
//!     25   8*n  elements, little-endian i64 or f64
//! ```

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RankId;

pub const MAGIC: [u8; 4] = *b"MWB1";
pub const HEADER_LEN: usize = 25;
/// Upper bound on elements accepted from the wire (8 GiB of payload).
pub const MAX_ELEMENTS: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown payload kind {0}")]
    UnknownKind(u8),
    #[error("INT64_SCALAR frame declares {0} elements")]
    ScalarCount(u64),
    #[error("frame declares {0} elements, above the limit")]
    TooLarge(u64),
    #[error("frame truncated: {0}")]
    Truncated(&'static str),
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[repr(u8)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PayloadKind {
    Int64Scalar = 0,
    Float64Array = 1,
}

impl PayloadKind {
    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        match b {
            0 => Ok(Self::Int64Scalar),
            1 => Ok(Self::Float64Array),
            other => Err(WireError::UnknownKind(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Int64(i64),
    Float64(Vec<f64>),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Int64(_) => PayloadKind::Int64Scalar,
            Payload::Float64(_) => PayloadKind::Float64Array,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::Int64(_) => 1,
            Payload::Float64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_ref(&self) -> PayloadRef<'_> {
        match self {
            Payload::Int64(v) => PayloadRef::Int64(*v),
            Payload::Float64(v) => PayloadRef::Float64(v),
        }
    }
}

/// Borrowed payload for sending without copying large arrays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayloadRef<'a> {
    Int64(i64),
    Float64(&'a [f64]),
}

impl PayloadRef<'_> {
    pub fn kind(&self) -> PayloadKind {
        match self {
            PayloadRef::Int64(_) => PayloadKind::Int64Scalar,
            PayloadRef::Float64(_) => PayloadKind::Float64Array,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PayloadRef::Int64(_) => 1,
            PayloadRef::Float64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<i64> for PayloadRef<'_> {
    fn from(v: i64) -> Self {
        PayloadRef::Int64(v)
    }
}

impl<'a> From<&'a [f64]> for PayloadRef<'a> {
    fn from(v: &'a [f64]) -> Self {
        PayloadRef::Float64(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub tag: u32,
    pub source: RankId,
    pub dest: RankId,
    pub payload: Payload,
}

impl Envelope {
    pub fn encode(&self) -> Vec<u8> {
        encode(self.tag, self.source, self.dest, self.payload.as_ref())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut cursor = bytes;
        let env = read_envelope(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(WireError::Truncated("trailing bytes after frame"));
        }
        Ok(env)
    }
}

pub fn encode(tag: u32, source: RankId, dest: RankId, payload: PayloadRef<'_>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * payload.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&tag.to_le_bytes());
    buf.extend_from_slice(&source.0.to_le_bytes());
    buf.extend_from_slice(&dest.0.to_le_bytes());
    buf.push(payload.kind() as u8);
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    match payload {
        PayloadRef::Int64(v) => buf.extend_from_slice(&v.to_le_bytes()),
        PayloadRef::Float64(values) => {
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    buf
}

pub fn write_envelope<W: Write>(
    w: &mut W,
    tag: u32,
    source: RankId,
    dest: RankId,
    payload: PayloadRef<'_>,
) -> io::Result<()> {
    w.write_all(&encode(tag, source, dest, payload))?;
    w.flush()
}

/// Reads one frame. A clean end of stream before the first header byte is
/// [`WireError::Closed`].
pub fn read_envelope<R: Read>(r: &mut R) -> Result<Envelope, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Err(WireError::Closed),
            Ok(0) => return Err(WireError::Truncated("header")),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let u32_at = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap());
    let tag = u32_at(4);
    let source = RankId(u32_at(8));
    let dest = RankId(u32_at(12));
    let kind = PayloadKind::from_byte(header[16])?;
    let count = u64::from_le_bytes(header[17..25].try_into().unwrap());
    if count > MAX_ELEMENTS {
        return Err(WireError::TooLarge(count));
    }
    let mut body = vec![0u8; count as usize * 8];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => WireError::Truncated("payload"),
        _ => WireError::Io(e),
    })?;
    let payload = match kind {
        PayloadKind::Int64Scalar => {
            if count != 1 {
                return Err(WireError::ScalarCount(count));
            }
            Payload::Int64(i64::from_le_bytes(body[..8].try_into().unwrap()))
        }
        PayloadKind::Float64Array => Payload::Float64(
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(Envelope {
        tag,
        source,
        dest,
        payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_int64_frame() {
        let env = Envelope {
            tag: 1,
            source: RankId(0),
            dest: RankId(1),
            payload: Payload::Int64(2),
        };
        let expected: [u8; 33] = [
            0x4D, 0x57, 0x42, 0x31, // magic
            0x01, 0x00, 0x00, 0x00, // tag
            0x00, 0x00, 0x00, 0x00, // source
            0x01, 0x00, 0x00, 0x00, // dest
            0x00, // INT64_SCALAR
            0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // count
            0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // value
        ];
        assert_eq!(env.encode(), expected);
        assert_eq!(Envelope::decode(&expected).unwrap(), env);
    }

    #[test]
    fn float_array_layout() {
        let bytes = encode(2, RankId(3), RankId(0), PayloadRef::Float64(&[1.0, -0.5]));
        assert_eq!(bytes.len(), HEADER_LEN + 16);
        assert_eq!(bytes[16], 1);
        assert_eq!(&bytes[17..25], &2u64.to_le_bytes());
        assert_eq!(&bytes[25..33], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[33..41], &(-0.5f64).to_le_bytes());
    }

    #[test]
    fn empty_array_is_header_only() {
        let bytes = encode(2, RankId(1), RankId(0), PayloadRef::Float64(&[]));
        assert_eq!(bytes.len(), HEADER_LEN);
        let env = Envelope::decode(&bytes).unwrap();
        assert_eq!(env.payload, Payload::Float64(vec![]));
    }

    #[test]
    fn rejects_malformed_frames() {
        let mut bytes = encode(1, RankId(0), RankId(1), PayloadRef::Int64(5));
        bytes[0] = b'X';
        assert!(matches!(Envelope::decode(&bytes), Err(WireError::BadMagic(_))));

        let mut bytes = encode(1, RankId(0), RankId(1), PayloadRef::Int64(5));
        bytes[16] = 7;
        assert!(matches!(Envelope::decode(&bytes), Err(WireError::UnknownKind(7))));

        let mut bytes = encode(1, RankId(0), RankId(1), PayloadRef::Float64(&[1.0, 2.0]));
        bytes[16] = 0;
        assert!(matches!(Envelope::decode(&bytes), Err(WireError::ScalarCount(2))));

        let bytes = encode(1, RankId(0), RankId(1), PayloadRef::Float64(&[1.0, 2.0]));
        assert!(matches!(
            Envelope::decode(&bytes[..bytes.len() - 3]),
            Err(WireError::Truncated("payload"))
        ));
        assert!(matches!(
            Envelope::decode(&bytes[..10]),
            Err(WireError::Truncated("header"))
        ));
        assert!(matches!(Envelope::decode(&[]), Err(WireError::Closed)));
    }

    proptest! {
        #[test]
        fn round_trip(tag: u32, src: u32, dst: u32, scalar: i64,
                      values in proptest::collection::vec(any::<f64>(), 0..64)) {
            for payload in [Payload::Int64(scalar), Payload::Float64(values.clone())] {
                let env = Envelope { tag, source: RankId(src), dest: RankId(dst), payload };
                let back = Envelope::decode(&env.encode()).unwrap();
                prop_assert_eq!(back.encode(), env.encode());
            }
        }
    }
}
