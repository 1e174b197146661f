//! Hyperstroke token sequences: the flat vocabulary, sequence framing and
//! the on-disk token cache.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::BBoxTokens;

/// Serialized hyperstroke: 4 box tokens then `k` visual tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HyperstrokeTokens {
    pub bbox: BBoxTokens,
    pub visual: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    BBox(u32),
    Visual(u32),
    Start,
    End,
    Pad,
}

/// One flat id space: `[box 0..=C | visual 0..|Z| | start | end | pad]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenVocab {
    pub grid_cells: u32,
    pub codebook_size: u32,
    pub k: usize,
}

impl TokenVocab {
    pub fn new(grid_cells: u32, codebook_size: u32, k: usize) -> Result<Self> {
        if grid_cells == 0 || codebook_size == 0 || k == 0 {
            return Err(CoreError::Invalid(format!(
                "vocab needs positive sizes, got C={grid_cells} |Z|={codebook_size} k={k}"
            )));
        }
        Ok(Self {
            grid_cells,
            codebook_size,
            k,
        })
    }

    pub fn bbox_vocab(&self) -> u32 {
        self.grid_cells + 1
    }

    pub fn visual_offset(&self) -> u32 {
        self.bbox_vocab()
    }

    pub fn start(&self) -> u32 {
        self.visual_offset() + self.codebook_size
    }

    pub fn end(&self) -> u32 {
        self.start() + 1
    }

    pub fn pad(&self) -> u32 {
        self.start() + 2
    }

    pub fn size(&self) -> usize {
        (self.bbox_vocab() + self.codebook_size + 3) as usize
    }

    /// Tokens per hyperstroke.
    pub fn stroke_len(&self) -> usize {
        4 + self.k
    }

    pub fn sequence_len(&self, strokes: usize) -> usize {
        1 + strokes * self.stroke_len()
    }

    pub fn id(&self, kind: TokenKind) -> Result<u32> {
        match kind {
            TokenKind::BBox(v) if v <= self.grid_cells => Ok(v),
            TokenKind::Visual(v) if v < self.codebook_size => Ok(self.visual_offset() + v),
            TokenKind::Start => Ok(self.start()),
            TokenKind::End => Ok(self.end()),
            TokenKind::Pad => Ok(self.pad()),
            other => Err(CoreError::Invalid(format!("{other:?} outside vocabulary"))),
        }
    }

    pub fn kind(&self, id: u32) -> Result<TokenKind> {
        let v = self.visual_offset();
        match id {
            i if i < v => Ok(TokenKind::BBox(i)),
            i if i < self.start() => Ok(TokenKind::Visual(i - v)),
            i if i == self.start() => Ok(TokenKind::Start),
            i if i == self.end() => Ok(TokenKind::End),
            i if i == self.pad() => Ok(TokenKind::Pad),
            i => Err(CoreError::Invalid(format!("token id {i} outside vocabulary of {}", self.size()))),
        }
    }

    /// Flat ids for one stroke, without framing.
    pub fn stroke_ids(&self, stroke: &HyperstrokeTokens) -> Result<Vec<u32>> {
        stroke.bbox.check(self.grid_cells)?;
        if stroke.visual.len() != self.k {
            return Err(CoreError::Shape(format!(
                "expected {} visual tokens, got {}",
                self.k,
                stroke.visual.len()
            )));
        }
        let mut ids = Vec::with_capacity(self.stroke_len());
        for b in stroke.bbox.as_array() {
            ids.push(self.id(TokenKind::BBox(b))?);
        }
        for v in &stroke.visual {
            ids.push(self.id(TokenKind::Visual(*v))?);
        }
        Ok(ids)
    }

    /// `[start] + strokes`, length `1 + n (4 + k)`.
    pub fn frame(&self, strokes: &[HyperstrokeTokens]) -> Result<Vec<u32>> {
        let mut ids = Vec::with_capacity(self.sequence_len(strokes.len()));
        ids.push(self.start());
        for s in strokes {
            ids.extend(self.stroke_ids(s)?);
        }
        Ok(ids)
    }

    /// Parses stroke ids (no framing) into strokes.
    pub fn parse_strokes(&self, ids: &[u32]) -> Result<Vec<HyperstrokeTokens>> {
        if ids.len() % self.stroke_len() != 0 {
            return Err(CoreError::Shape(format!(
                "{} tokens is not a whole number of {}-token strokes",
                ids.len(),
                self.stroke_len()
            )));
        }
        ids.chunks(self.stroke_len())
            .map(|chunk| {
                let mut b = [0u32; 4];
                for (slot, id) in b.iter_mut().zip(&chunk[..4]) {
                    match self.kind(*id)? {
                        TokenKind::BBox(v) => *slot = v,
                        other => {
                            return Err(CoreError::Invalid(format!("expected box token, got {other:?}")))
                        }
                    }
                }
                let visual = chunk[4..]
                    .iter()
                    .map(|id| match self.kind(*id)? {
                        TokenKind::Visual(v) => Ok(v),
                        other => Err(CoreError::Invalid(format!("expected visual token, got {other:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let bbox = BBoxTokens::from(b);
                bbox.check(self.grid_cells)?;
                Ok(HyperstrokeTokens { bbox, visual })
            })
            .collect()
    }

    /// Parses a framed sequence: leading start, strokes, then optional end and padding.
    pub fn parse(&self, ids: &[u32]) -> Result<Vec<HyperstrokeTokens>> {
        let body = match ids.first() {
            Some(&s) if s == self.start() => &ids[1..],
            _ => return Err(CoreError::Invalid("sequence must begin with the start token".into())),
        };
        let stop = body
            .iter()
            .position(|id| *id == self.end() || *id == self.pad())
            .unwrap_or(body.len());
        if body[stop..].iter().any(|id| *id != self.end() && *id != self.pad()) {
            return Err(CoreError::Invalid("content after end of sequence".into()));
        }
        self.parse_strokes(&body[..stop])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenCacheHeader {
    pub format_version: u32,
    pub bbox_vocab: u32,
    pub visual_vocab: u32,
    pub k: usize,
    pub grid_c: u32,
    pub canvas: (u32, u32),
    pub patch: (u32, u32),
    pub count: usize,
}

impl TokenCacheHeader {
    pub fn vocab(&self) -> Result<TokenVocab> {
        if self.bbox_vocab != self.grid_c + 1 {
            return Err(CoreError::TokenCache(format!(
                "box vocab {} inconsistent with C={}",
                self.bbox_vocab, self.grid_c
            )));
        }
        TokenVocab::new(self.grid_c, self.visual_vocab, self.k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenCacheEntry {
    pub key: String,
    pub category: String,
    #[serde(default)]
    pub truncated: bool,
    #[serde(skip)]
    pub tokens: Vec<u32>,
}

const CACHE_MAGIC: &[u8; 8] = b"HSTKCACH";
pub const TOKEN_CACHE_VERSION: u32 = 1;

/// Binary layout, little endian:
/// `magic[8] | u32 header_len | header JSON | per entry: u32 meta_len | meta JSON | u32 n | n x u32`.
pub fn write_token_cache(path: impl AsRef<Path>, header: &TokenCacheHeader, entries: &[TokenCacheEntry]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
    }
    let mut header = header.clone();
    header.count = entries.len();
    let io = |e| CoreError::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    out.write_all(CACHE_MAGIC).map_err(io)?;
    let head = serde_json::to_vec(&header).map_err(|e| CoreError::json("token cache header", e))?;
    out.write_all(&(head.len() as u32).to_le_bytes()).map_err(io)?;
    out.write_all(&head).map_err(io)?;
    for entry in entries {
        let meta = serde_json::to_vec(entry).map_err(|e| CoreError::json("token cache entry", e))?;
        out.write_all(&(meta.len() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&meta).map_err(io)?;
        out.write_all(&(entry.tokens.len() as u32).to_le_bytes()).map_err(io)?;
        for t in &entry.tokens {
            out.write_all(&t.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_token_cache(path: impl AsRef<Path>) -> Result<(TokenCacheHeader, Vec<TokenCacheEntry>)> {
    let path = path.as_ref();
    let io = |e| CoreError::io(path, e);
    let mut input = BufReader::new(File::open(path).map_err(io)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != CACHE_MAGIC {
        return Err(CoreError::TokenCache(format!("{}: bad magic", path.display())));
    }
    let read_u32 = |input: &mut BufReader<File>| -> Result<u32> {
        let mut b = [0u8; 4];
        input.read_exact(&mut b).map_err(io)?;
        Ok(u32::from_le_bytes(b))
    };
    let read_json = |input: &mut BufReader<File>, len: u32| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len as usize];
        input.read_exact(&mut buf).map_err(io)?;
        Ok(buf)
    };
    let len = read_u32(&mut input)?;
    let header: TokenCacheHeader = serde_json::from_slice(&read_json(&mut input, len)?)
        .map_err(|e| CoreError::json("token cache header", e))?;
    if header.format_version != TOKEN_CACHE_VERSION {
        return Err(CoreError::TokenCache(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let vocab = header.vocab()?;
    let mut entries = Vec::with_capacity(header.count);
    for _ in 0..header.count {
        let len = read_u32(&mut input)?;
        let mut entry: TokenCacheEntry = serde_json::from_slice(&read_json(&mut input, len)?)
            .map_err(|e| CoreError::json("token cache entry", e))?;
        let n = read_u32(&mut input)? as usize;
        let mut raw = vec![0u8; n * 4];
        input.read_exact(&mut raw).map_err(io)?;
        entry.tokens = raw.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if let Some(bad) = entry.tokens.iter().find(|t| **t as usize >= vocab.size()) {
            return Err(CoreError::TokenCache(format!("token {bad} outside vocabulary")));
        }
        entries.push(entry);
    }
    Ok((header, entries))
}
