//! Content names, flow names, path tags and the three packet types.
//!
//! Names are hierarchical lists of non-empty byte components. Flow traffic
//! always ends in a decimal sequence component, so the flow name of a packet
//! is its name with the last component dropped.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Identifier of a forwarding interface, local to one node.
pub type FaceId = u32;

/// Default loop guard carried by every new Interest.
pub const DEFAULT_HOP_BUDGET: u8 = 32;

/// Fixed header size of an Interest on the wire (bytes, without tag).
pub const INTEREST_HEADER_BYTES: u32 = 60;
/// Fixed header size of a Data packet on the wire (bytes, without payload or tag).
pub const DATA_HEADER_BYTES: u32 = 60;
/// Size of a NACK on the wire.
pub const NACK_BYTES: u32 = 60;
/// Bytes added per tag stack item.
pub const TAG_ITEM_BYTES: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("name must start with '/': {0:?}")]
    MissingSlash(String),
    #[error("empty name component in {0:?}")]
    EmptyComponent(String),
    #[error("name {0:?} has fewer than two components")]
    TooShort(String),
    #[error("last component of {0:?} is not a decimal sequence number")]
    BadSequence(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pop on empty tag")]
pub struct EmptyTagError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated packet: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("unknown packet type {0}")]
    UnknownType(u8),
    #[error("unknown nack reason {0}")]
    UnknownReason(u8),
    #[error("invalid name: {0}")]
    Name(#[from] NameError),
    #[error("{0} trailing bytes after packet")]
    Trailing(usize),
}

fn parse_components(text: &str) -> Result<Vec<Vec<u8>>, NameError> {
    let rest = text
        .strip_prefix('/')
        .ok_or_else(|| NameError::MissingSlash(text.to_string()))?;
    if rest.is_empty() {
        return Ok(Vec::new());
    }
    rest.split('/')
        .map(|c| {
            if c.is_empty() {
                Err(NameError::EmptyComponent(text.to_string()))
            } else {
                Ok(c.as_bytes().to_vec())
            }
        })
        .collect()
}

fn write_components(f: &mut fmt::Formatter<'_>, components: &[Vec<u8>]) -> fmt::Result {
    if components.is_empty() {
        return f.write_str("/");
    }
    for c in components {
        write!(f, "/{}", String::from_utf8_lossy(c))?;
    }
    Ok(())
}

/// Hierarchical content name such as `/UCLA/video/p1/17`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentName {
    components: Vec<Vec<u8>>,
}

impl ContentName {
    /// Builds a name from raw components. Requires at least two non-empty
    /// components (a prefix and a sequence postfix).
    pub fn from_components(components: Vec<Vec<u8>>) -> Result<Self, NameError> {
        let name = ContentName { components };
        if name.components.iter().any(|c| c.is_empty()) {
            return Err(NameError::EmptyComponent(name.to_string()));
        }
        if name.components.len() < 2 {
            return Err(NameError::TooShort(name.to_string()));
        }
        Ok(name)
    }

    pub fn components(&self) -> &[Vec<u8>] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Flow name of this packet: the name minus its sequence postfix.
    pub fn flow_name(&self) -> FlowName {
        FlowName {
            components: self.components[..self.components.len() - 1].to_vec(),
        }
    }

    /// Parses the final component as a decimal sequence number.
    pub fn sequence(&self) -> Result<u64, NameError> {
        let last = self.components.last().expect("at least two components");
        std::str::from_utf8(last)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| NameError::BadSequence(self.to_string()))
    }

    /// True if `prefix` is a component-wise prefix of this name.
    pub fn has_prefix(&self, prefix: &FlowName) -> bool {
        prefix.components.len() <= self.components.len()
            && self.components[..prefix.components.len()] == prefix.components[..]
    }
}

impl fmt::Display for ContentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_components(f, &self.components)
    }
}

impl FromStr for ContentName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let components = parse_components(s)?;
        if components.len() < 2 {
            return Err(NameError::TooShort(s.to_string()));
        }
        Ok(ContentName { components })
    }
}

/// Free-function form of [`ContentName::flow_name`] that also accepts
/// unvalidated component lists.
pub fn flow_name_of(components: &[Vec<u8>]) -> Result<FlowName, NameError> {
    if components.len() < 2 {
        let shown = FlowName {
            components: components.to_vec(),
        };
        return Err(NameError::TooShort(shown.to_string()));
    }
    Ok(FlowName {
        components: components[..components.len() - 1].to_vec(),
    })
}

/// Shared prefix of all packets of one content object. Also used as the
/// prefix type of FIB entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FlowName {
    components: Vec<Vec<u8>>,
}

impl FlowName {
    pub fn from_components(components: Vec<Vec<u8>>) -> Result<Self, NameError> {
        let f = FlowName { components };
        if f.components.iter().any(|c| c.is_empty()) {
            return Err(NameError::EmptyComponent(f.to_string()));
        }
        Ok(f)
    }

    pub fn components(&self) -> &[Vec<u8>] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Appends a segment, producing a full content name.
    pub fn append(&self, segment: &[u8]) -> ContentName {
        assert!(!segment.is_empty(), "empty segment");
        let mut components = self.components.clone();
        components.push(segment.to_vec());
        // a flow name with zero components plus one segment is still a
        // legal single-level name for internal use, so skip the >=2 check
        ContentName { components }
    }

    /// Name of packet `seq` of this flow.
    pub fn packet(&self, seq: u64) -> ContentName {
        self.append(seq.to_string().as_bytes())
    }

    /// True if `self` is a component-wise prefix of `other`.
    pub fn is_prefix_of(&self, other: &FlowName) -> bool {
        self.components.len() <= other.components.len()
            && other.components[..self.components.len()] == self.components[..]
    }

    /// All prefixes of this name from longest (itself) down to the root.
    pub fn prefixes(&self) -> impl Iterator<Item = FlowName> + '_ {
        (0..=self.components.len()).rev().map(move |n| FlowName {
            components: self.components[..n].to_vec(),
        })
    }
}

impl fmt::Display for FlowName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_components(f, &self.components)
    }
}

impl FromStr for FlowName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(FlowName {
            components: parse_components(s)?,
        })
    }
}

/// Stack of interface identifiers describing one transmission path.
/// The top of the stack is the last element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Tag {
    stack: Vec<FaceId>,
}

impl Tag {
    pub fn new() -> Self {
        Tag::default()
    }

    pub fn from_stack(stack: Vec<FaceId>) -> Self {
        Tag { stack }
    }

    pub fn push(&mut self, face: FaceId) {
        self.stack.push(face);
    }

    pub fn pop(&mut self) -> Result<FaceId, EmptyTagError> {
        self.stack.pop().ok_or(EmptyTagError)
    }

    /// Value-style push: returns a new tag with `face` on top.
    pub fn pushed(&self, face: FaceId) -> Tag {
        let mut t = self.clone();
        t.push(face);
        t
    }

    /// Value-style pop: returns the former top and the remainder.
    pub fn popped(&self) -> Result<(FaceId, Tag), EmptyTagError> {
        let mut t = self.clone();
        let top = t.pop()?;
        Ok((top, t))
    }

    pub fn top(&self) -> Option<FaceId> {
        self.stack.last().copied()
    }

    pub fn len(&self) -> usize {
        self.stack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stack.is_empty()
    }

    /// Bottom-to-top view of the stack.
    pub fn as_slice(&self) -> &[FaceId] {
        &self.stack
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, id) in self.stack.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{id}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interest {
    pub name: ContentName,
    /// `None` for legacy name-routed Interests.
    pub tag: Option<Tag>,
    pub probe: bool,
    pub hop_budget: u8,
}

impl Interest {
    pub fn new(name: ContentName) -> Self {
        Interest {
            name,
            tag: None,
            probe: false,
            hop_budget: DEFAULT_HOP_BUDGET,
        }
    }

    pub fn probe(name: ContentName) -> Self {
        Interest {
            name,
            tag: Some(Tag::new()),
            probe: true,
            hop_budget: DEFAULT_HOP_BUDGET,
        }
    }

    pub fn tagged(name: ContentName, tag: Tag) -> Self {
        Interest {
            name,
            tag: Some(tag),
            probe: false,
            hop_budget: DEFAULT_HOP_BUDGET,
        }
    }

    pub fn wire_bytes(&self) -> u32 {
        INTEREST_HEADER_BYTES + self.tag.as_ref().map_or(0, |t| t.len() as u32 * TAG_ITEM_BYTES)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Data {
    pub name: ContentName,
    /// Present only on probe replies.
    pub tag: Option<Tag>,
    /// Set when the packet was served by a cache or split off an aggregated
    /// PIT entry rather than travelling the full path from the producer.
    pub from_intermediate: bool,
    pub payload_size: u32,
}

impl Data {
    pub fn new(name: ContentName, payload_size: u32) -> Self {
        Data {
            name,
            tag: None,
            from_intermediate: false,
            payload_size,
        }
    }

    pub fn wire_bytes(&self) -> u32 {
        DATA_HEADER_BYTES
            + self.payload_size
            + self.tag.as_ref().map_or(0, |t| t.len() as u32 * TAG_ITEM_BYTES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NackReason {
    PathFailure,
    NoRoute,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nack {
    pub name: ContentName,
    pub reason: NackReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Interest(Interest),
    Data(Data),
    Nack(Nack),
}

const TYPE_INTEREST: u8 = 1;
const TYPE_DATA: u8 = 2;
const TYPE_NACK: u8 = 3;
const FLAG_PROBE: u8 = 0x01;
const FLAG_TAG: u8 = 0x02;
const FLAG_INTERMEDIATE: u8 = 0x04;

impl Packet {
    pub fn name(&self) -> &ContentName {
        match self {
            Packet::Interest(i) => &i.name,
            Packet::Data(d) => &d.name,
            Packet::Nack(n) => &n.name,
        }
    }

    /// Simulated size on the link, in bytes.
    pub fn wire_bytes(&self) -> u32 {
        match self {
            Packet::Interest(i) => i.wire_bytes(),
            Packet::Data(d) => d.wire_bytes(),
            Packet::Nack(_) => NACK_BYTES,
        }
    }

    /// Binary encoding: a type byte, the length-prefixed name, then
    /// type-specific fields. Tags are a u16 count of big-endian u32 ids.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        match self {
            Packet::Interest(i) => {
                out.push(TYPE_INTEREST);
                encode_name(&mut out, &i.name);
                let mut flags = 0;
                if i.probe {
                    flags |= FLAG_PROBE;
                }
                if i.tag.is_some() {
                    flags |= FLAG_TAG;
                }
                out.push(flags);
                out.push(i.hop_budget);
                if let Some(t) = &i.tag {
                    encode_tag(&mut out, t);
                }
            }
            Packet::Data(d) => {
                out.push(TYPE_DATA);
                encode_name(&mut out, &d.name);
                let mut flags = 0;
                if d.from_intermediate {
                    flags |= FLAG_INTERMEDIATE;
                }
                if d.tag.is_some() {
                    flags |= FLAG_TAG;
                }
                out.push(flags);
                out.extend_from_slice(&d.payload_size.to_be_bytes());
                if let Some(t) = &d.tag {
                    encode_tag(&mut out, t);
                }
            }
            Packet::Nack(n) => {
                out.push(TYPE_NACK);
                encode_name(&mut out, &n.name);
                out.push(match n.reason {
                    NackReason::PathFailure => 1,
                    NackReason::NoRoute => 2,
                });
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Packet, DecodeError> {
        let mut r = Reader { buf, pos: 0 };
        let ty = r.u8()?;
        let name = r.name()?;
        let pkt = match ty {
            TYPE_INTEREST => {
                let flags = r.u8()?;
                let hop_budget = r.u8()?;
                let tag = if flags & FLAG_TAG != 0 {
                    Some(r.tag()?)
                } else {
                    None
                };
                Packet::Interest(Interest {
                    name,
                    tag,
                    probe: flags & FLAG_PROBE != 0,
                    hop_budget,
                })
            }
            TYPE_DATA => {
                let flags = r.u8()?;
                let payload_size = r.u32()?;
                let tag = if flags & FLAG_TAG != 0 {
                    Some(r.tag()?)
                } else {
                    None
                };
                Packet::Data(Data {
                    name,
                    tag,
                    from_intermediate: flags & FLAG_INTERMEDIATE != 0,
                    payload_size,
                })
            }
            TYPE_NACK => {
                let reason = match r.u8()? {
                    1 => NackReason::PathFailure,
                    2 => NackReason::NoRoute,
                    other => return Err(DecodeError::UnknownReason(other)),
                };
                Packet::Nack(Nack { name, reason })
            }
            other => return Err(DecodeError::UnknownType(other)),
        };
        if r.pos != buf.len() {
            return Err(DecodeError::Trailing(buf.len() - r.pos));
        }
        Ok(pkt)
    }
}

fn encode_name(out: &mut Vec<u8>, name: &ContentName) {
    out.extend_from_slice(&(name.components.len() as u16).to_be_bytes());
    for c in &name.components {
        out.extend_from_slice(&(c.len() as u16).to_be_bytes());
        out.extend_from_slice(c);
    }
}

fn encode_tag(out: &mut Vec<u8>, tag: &Tag) {
    out.extend_from_slice(&(tag.stack.len() as u16).to_be_bytes());
    for id in &tag.stack {
        out.extend_from_slice(&id.to_be_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: n - (self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn name(&mut self) -> Result<ContentName, DecodeError> {
        let n = self.u16()? as usize;
        let mut components = Vec::with_capacity(n);
        for _ in 0..n {
            let len = self.u16()? as usize;
            components.push(self.take(len)?.to_vec());
        }
        Ok(ContentName::from_components(components)?)
    }

    fn tag(&mut self) -> Result<Tag, DecodeError> {
        let n = self.u16()? as usize;
        let mut stack = Vec::with_capacity(n);
        for _ in 0..n {
            stack.push(self.u32()?);
        }
        Ok(Tag { stack })
    }
}
