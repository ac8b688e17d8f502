//! Binary protocol spoken with external scoring processes.
//!
//! All integers little-endian.
//!
//! ```text
//! client hello : "PSCR" u16 version
//! server hello : "PSCR" u16 version u16 max_batch
//! request      : u64 request_id u32 n u32 patch_size  n*s*s*3 bytes RGB
//! response     : u64 request_id u32 n u32 patch_size  n*s*s f32
//! ```
//!
//! `max_batch` is the largest `n` the server accepts in one frame (0 = no
//! limit). Clients may keep several requests in flight; responses are matched
//! by `request_id` and may arrive in any order.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PSCR";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub request_id: u64,
    pub n: u32,
    pub patch_size: u32,
}

impl FrameHeader {
    fn pixels(&self) -> Result<usize> {
        (self.n as usize)
            .checked_mul(self.patch_size as usize)
            .and_then(|v| v.checked_mul(self.patch_size as usize))
            .ok_or_else(|| Error::Protocol("frame size overflows".into()))
    }
}

fn read_u16(r: &mut impl Read) -> io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_magic(r: &mut impl Read) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Protocol(format!("bad magic {magic:02x?}")));
    }
    Ok(())
}

fn check_version(v: u16) -> Result<()> {
    if v != VERSION {
        return Err(Error::Protocol(format!(
            "version mismatch: peer speaks {v}, we speak {VERSION}"
        )));
    }
    Ok(())
}

pub fn write_client_hello(w: &mut impl Write) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.flush()
}

pub fn read_client_hello(r: &mut impl Read) -> Result<()> {
    read_magic(r)?;
    check_version(read_u16(r)?)
}

pub fn write_server_hello(w: &mut impl Write, max_batch: u16) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&max_batch.to_le_bytes())?;
    w.flush()
}

/// Returns the server's `max_batch`.
pub fn read_server_hello(r: &mut impl Read) -> Result<u16> {
    read_magic(r)?;
    check_version(read_u16(r)?)?;
    Ok(read_u16(r)?)
}

fn write_header(w: &mut impl Write, h: &FrameHeader) -> io::Result<()> {
    let mut b = [0u8; 16];
    b[..8].copy_from_slice(&h.request_id.to_le_bytes());
    b[8..12].copy_from_slice(&h.n.to_le_bytes());
    b[12..].copy_from_slice(&h.patch_size.to_le_bytes());
    w.write_all(&b)
}

/// `Ok(None)` on a clean end of stream before any header byte.
fn read_header(r: &mut impl Read) -> Result<Option<FrameHeader>> {
    let mut b = [0u8; 16];
    let mut got = 0;
    while got < b.len() {
        match r.read(&mut b[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Protocol("stream ended inside a frame header".into())),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(FrameHeader {
        request_id: u64::from_le_bytes(b[..8].try_into().unwrap()),
        n: u32::from_le_bytes(b[8..12].try_into().unwrap()),
        patch_size: u32::from_le_bytes(b[12..].try_into().unwrap()),
    }))
}

pub fn write_request(w: &mut impl Write, h: &FrameHeader, pixels: &[u8]) -> Result<()> {
    if pixels.len() != h.pixels()? * 3 {
        return Err(Error::invalid("request payload does not match its header"));
    }
    write_header(w, h)?;
    w.write_all(pixels)?;
    w.flush()?;
    Ok(())
}

pub fn read_request(r: &mut impl Read) -> Result<Option<(FrameHeader, Vec<u8>)>> {
    let Some(h) = read_header(r)? else {
        return Ok(None);
    };
    let mut pixels = vec![0u8; h.pixels()? * 3];
    r.read_exact(&mut pixels)?;
    Ok(Some((h, pixels)))
}

pub fn write_response(w: &mut impl Write, h: &FrameHeader, probs: &[f32]) -> Result<()> {
    if probs.len() != h.pixels()? {
        return Err(Error::invalid("response payload does not match its header"));
    }
    write_header(w, h)?;
    let mut bytes = Vec::with_capacity(probs.len() * 4);
    for p in probs {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_response(r: &mut impl Read) -> Result<Option<(FrameHeader, Vec<f32>)>> {
    let Some(h) = read_header(r)? else {
        return Ok(None);
    };
    let mut bytes = vec![0u8; h.pixels()? * 4];
    r.read_exact(&mut bytes)?;
    let probs = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Some((h, probs)))
}

/// What the stub server answers with.
#[derive(Debug, Clone, PartialEq)]
pub enum StubMode {
    /// Every pixel gets this value, unclamped (useful for out-of-range tests).
    Constant(f32),
    /// Mean of the pixel's RGB channels divided by 255.
    Echo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubConfig {
    pub mode: StubMode,
    pub max_batch: u16,
    /// Collect this many requests, then answer them last-first. Replies are
    /// held until the window fills or the client closes, so clients must send
    /// a multiple of the window.
    pub reverse_window: usize,
    /// Answer the hello with a wrong magic.
    pub bad_magic: bool,
}

impl Default for StubConfig {
    fn default() -> Self {
        StubConfig {
            mode: StubMode::Echo,
            max_batch: 16,
            reverse_window: 1,
            bad_magic: false,
        }
    }
}

fn stub_answer(mode: &StubMode, h: &FrameHeader, pixels: &[u8]) -> Vec<f32> {
    match mode {
        StubMode::Constant(v) => vec![*v; pixels.len() / 3],
        StubMode::Echo => pixels
            .chunks_exact(3)
            .map(|p| (p[0] as f32 + p[1] as f32 + p[2] as f32) / (3.0 * 255.0))
            .collect(),
    }
    .into_iter()
    .take(h.n as usize * h.patch_size as usize * h.patch_size as usize)
    .collect()
}

/// Reference server loop: handshake, then answer requests until the client
/// closes its end.
pub fn serve_stub(r: &mut impl Read, w: &mut impl Write, cfg: &StubConfig) -> Result<()> {
    read_client_hello(r)?;
    if cfg.bad_magic {
        w.write_all(b"NOPE")?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&cfg.max_batch.to_le_bytes())?;
        w.flush()?;
        return Ok(());
    }
    write_server_hello(w, cfg.max_batch)?;
    let window = cfg.reverse_window.max(1);
    let mut pending: Vec<(FrameHeader, Vec<f32>)> = Vec::new();
    loop {
        let next = read_request(r)?;
        let done = next.is_none();
        if let Some((h, pixels)) = next {
            if cfg.max_batch > 0 && h.n > cfg.max_batch as u32 {
                return Err(Error::Protocol(format!(
                    "request of {} patches exceeds max_batch {}",
                    h.n, cfg.max_batch
                )));
            }
            let probs = stub_answer(&cfg.mode, &h, &pixels);
            pending.push((h, probs));
        }
        if pending.len() >= window || done {
            while let Some((h, probs)) = pending.pop() {
                write_response(w, &h, &probs)?;
            }
        }
        if done {
            return Ok(());
        }
    }
}
