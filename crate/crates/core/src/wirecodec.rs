//! MAVLink v2-style framing for injected GPS fixes, the per-epoch transmit
//! scheduler and length-prefixed capture files.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensors::{FixOrigin, GpsFix};
use crate::simcore::{geodetic_to_ned, ned_to_geodetic, GeoRef};

pub const MAGIC: u8 = 0xFD;
pub const HEADER_LEN: usize = 10;
pub const CRC_LEN: usize = 2;
pub const GPS_INJECT_MSGID: u32 = 50_000;
pub const GPS_INJECT_CRC_EXTRA: u8 = 0x5A;
pub const GPS_INJECT_PAYLOAD_LEN: usize = 28;
pub const GPS_INJECT_FRAME_LEN: usize = HEADER_LEN + GPS_INJECT_PAYLOAD_LEN + CRC_LEN;
pub const HEARTBEAT_MSGID: u32 = 0;
pub const HEARTBEAT_CRC_EXTRA: u8 = 50;
pub const HEARTBEAT_PAYLOAD_LEN: usize = 9;
pub const DEFAULT_SYSID: u8 = 1;
pub const DEFAULT_COMPID: u8 = 220;
pub const FIX_TYPE_3D: u8 = 3;
pub const DEFAULT_SATELLITES: u8 = 12;

/// CRC-16/MCRF4XX (init 0xFFFF, reflected 0x1021, no final xor).
pub fn crc16_mcrf4xx(data: &[u8]) -> u16 {
    crc_accumulate(0xFFFF, data)
}

pub fn crc_accumulate(mut crc: u16, data: &[u8]) -> u16 {
    for &b in data {
        let mut tmp = b ^ (crc & 0xFF) as u8;
        tmp ^= tmp << 4;
        let tmp = tmp as u16;
        crc = (crc >> 8) ^ (tmp << 8) ^ (tmp << 3) ^ (tmp >> 4);
    }
    crc
}

fn crc_extra(msgid: u32) -> Option<u8> {
    match msgid {
        GPS_INJECT_MSGID => Some(GPS_INJECT_CRC_EXTRA),
        HEARTBEAT_MSGID => Some(HEARTBEAT_CRC_EXTRA),
        _ => None,
    }
}

fn expected_len(msgid: u32) -> Option<usize> {
    match msgid {
        GPS_INJECT_MSGID => Some(GPS_INJECT_PAYLOAD_LEN),
        HEARTBEAT_MSGID => Some(HEARTBEAT_PAYLOAD_LEN),
        _ => None,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("non-finite {0} in fix")]
    NonFinite(&'static str),
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("unknown message id {0}")]
    UnknownMessage(u32),
    #[error("payload of {got} bytes, message {msgid} needs {want}")]
    PayloadLength { msgid: u32, got: usize, want: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated frame: have {have} bytes, need {need}")]
    Truncated { have: usize, need: usize },
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("unsupported incompat flags {0:#04x}")]
    IncompatFlags(u8),
    #[error("unknown message id {0}")]
    UnknownMessage(u32),
    #[error("message {msgid} declares {got} payload bytes, expected {want}")]
    LengthMismatch { msgid: u32, got: usize, want: usize },
    #[error("crc mismatch: frame {frame:#06x}, computed {computed:#06x}")]
    CrcMismatch { frame: u16, computed: u16 },
    #[error("message {0} is not a gps inject frame")]
    NotGpsInject(u32),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
}

/// One decoded frame of any known message type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub seq: u8,
    pub sysid: u8,
    pub compid: u8,
    pub msgid: u32,
    pub payload: Vec<u8>,
}

impl RawFrame {
    pub fn class(&self) -> MsgClass {
        MsgClass::of(self.msgid)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, EncodeError> {
        let extra = crc_extra(self.msgid).ok_or(EncodeError::UnknownMessage(self.msgid))?;
        let want = expected_len(self.msgid).ok_or(EncodeError::UnknownMessage(self.msgid))?;
        if self.payload.len() != want {
            return Err(EncodeError::PayloadLength {
                msgid: self.msgid,
                got: self.payload.len(),
                want,
            });
        }
        let mut out = Vec::with_capacity(HEADER_LEN + want + CRC_LEN);
        out.push(MAGIC);
        out.push(want as u8);
        out.push(0);
        out.push(0);
        out.push(self.seq);
        out.push(self.sysid);
        out.push(self.compid);
        out.extend_from_slice(&self.msgid.to_le_bytes()[..3]);
        out.extend_from_slice(&self.payload);
        let crc = crc_accumulate(crc16_mcrf4xx(&out[1..]), &[extra]);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn heartbeat(seq: u8) -> Self {
        // custom type, autopilot invalid, base mode, custom mode, state standby, version 3
        let mut payload = vec![0u8; HEARTBEAT_PAYLOAD_LEN];
        payload[4] = 0;
        payload[5] = 8;
        payload[7] = 3;
        payload[8] = 3;
        Self {
            seq,
            sysid: DEFAULT_SYSID,
            compid: DEFAULT_COMPID,
            msgid: HEARTBEAT_MSGID,
            payload,
        }
    }
}

/// Parses one frame from the front of `bytes`, returning it and the byte count used.
pub fn decode_frame(bytes: &[u8]) -> Result<(RawFrame, usize), DecodeError> {
    let Some(&magic) = bytes.first() else {
        return Err(DecodeError::Truncated {
            have: 0,
            need: HEADER_LEN,
        });
    };
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            have: bytes.len(),
            need: HEADER_LEN,
        });
    }
    let len = bytes[1] as usize;
    if bytes[2] != 0 {
        return Err(DecodeError::IncompatFlags(bytes[2]));
    }
    let msgid = u32::from_le_bytes([bytes[7], bytes[8], bytes[9], 0]);
    let (Some(want), Some(extra)) = (expected_len(msgid), crc_extra(msgid)) else {
        return Err(DecodeError::UnknownMessage(msgid));
    };
    if len != want {
        return Err(DecodeError::LengthMismatch {
            msgid,
            got: len,
            want,
        });
    }
    let total = HEADER_LEN + len + CRC_LEN;
    if bytes.len() < total {
        return Err(DecodeError::Truncated {
            have: bytes.len(),
            need: total,
        });
    }
    let body_end = HEADER_LEN + len;
    let computed = crc_accumulate(crc16_mcrf4xx(&bytes[1..body_end]), &[extra]);
    let frame = u16::from_le_bytes([bytes[body_end], bytes[body_end + 1]]);
    if computed != frame {
        return Err(DecodeError::CrcMismatch { frame, computed });
    }
    Ok((
        RawFrame {
            seq: bytes[4],
            sysid: bytes[5],
            compid: bytes[6],
            msgid,
            payload: bytes[HEADER_LEN..body_end].to_vec(),
        },
        total,
    ))
}

/// Integer contents of a gps inject payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GpsInjectPayload {
    pub t_usec: u64,
    pub lat: i32,
    pub lon: i32,
    pub alt_mm: i32,
    pub vel_n: i16,
    pub vel_e: i16,
    pub vel_d: i16,
    pub fix_type: u8,
    pub satellites: u8,
}

impl GpsInjectPayload {
    pub fn pack(&self) -> [u8; GPS_INJECT_PAYLOAD_LEN] {
        let mut b = [0u8; GPS_INJECT_PAYLOAD_LEN];
        b[0..8].copy_from_slice(&self.t_usec.to_le_bytes());
        b[8..12].copy_from_slice(&self.lat.to_le_bytes());
        b[12..16].copy_from_slice(&self.lon.to_le_bytes());
        b[16..20].copy_from_slice(&self.alt_mm.to_le_bytes());
        b[20..22].copy_from_slice(&self.vel_n.to_le_bytes());
        b[22..24].copy_from_slice(&self.vel_e.to_le_bytes());
        b[24..26].copy_from_slice(&self.vel_d.to_le_bytes());
        b[26] = self.fix_type;
        b[27] = self.satellites;
        b
    }

    pub fn unpack(b: &[u8; GPS_INJECT_PAYLOAD_LEN]) -> Self {
        let i32_at = |o: usize| i32::from_le_bytes([b[o], b[o + 1], b[o + 2], b[o + 3]]);
        let i16_at = |o: usize| i16::from_le_bytes([b[o], b[o + 1]]);
        let mut t = [0u8; 8];
        t.copy_from_slice(&b[0..8]);
        Self {
            t_usec: u64::from_le_bytes(t),
            lat: i32_at(8),
            lon: i32_at(12),
            alt_mm: i32_at(16),
            vel_n: i16_at(20),
            vel_e: i16_at(22),
            vel_d: i16_at(24),
            fix_type: b[26],
            satellites: b[27],
        }
    }
}

fn quantize_i32(v: f64, scale: f64, what: &'static str, limit: f64) -> Result<i32, EncodeError> {
    if !v.is_finite() {
        return Err(EncodeError::NonFinite(what));
    }
    if v.abs() > limit {
        return Err(EncodeError::OutOfRange { what, value: v });
    }
    let q = (v * scale).round();
    if q < i32::MIN as f64 || q > i32::MAX as f64 {
        return Err(EncodeError::OutOfRange { what, value: v });
    }
    Ok(q as i32)
}

fn quantize_i16(v: f64, what: &'static str) -> Result<i16, EncodeError> {
    if !v.is_finite() {
        return Err(EncodeError::NonFinite(what));
    }
    let q = (v * 100.0).round();
    if q < i16::MIN as f64 || q > i16::MAX as f64 {
        return Err(EncodeError::OutOfRange { what, value: v });
    }
    Ok(q as i16)
}

pub fn payload_from_fix(fix: &GpsFix, geo: &GeoRef) -> Result<GpsInjectPayload, EncodeError> {
    if !fix.position.iter().all(|v| v.is_finite()) {
        return Err(EncodeError::NonFinite("position"));
    }
    if !(fix.t.is_finite() && fix.t >= 0.0) {
        return Err(EncodeError::OutOfRange {
            what: "time",
            value: fix.t,
        });
    }
    let t_usec = (fix.t * 1e6).round();
    if t_usec >= u64::MAX as f64 {
        return Err(EncodeError::OutOfRange {
            what: "time",
            value: fix.t,
        });
    }
    let (lat, lon, alt) = ned_to_geodetic(&fix.position, geo);
    Ok(GpsInjectPayload {
        t_usec: t_usec as u64,
        lat: quantize_i32(lat, 1e7, "latitude", 90.0)?,
        lon: quantize_i32(lon, 1e7, "longitude", 180.0)?,
        alt_mm: quantize_i32(alt, 1e3, "altitude", 2.0e6)?,
        vel_n: quantize_i16(fix.velocity.x, "vel_n")?,
        vel_e: quantize_i16(fix.velocity.y, "vel_e")?,
        vel_d: quantize_i16(fix.velocity.z, "vel_d")?,
        fix_type: FIX_TYPE_3D,
        satellites: DEFAULT_SATELLITES,
    })
}

pub fn fix_from_payload(p: &GpsInjectPayload, geo: &GeoRef) -> GpsFix {
    let position = geodetic_to_ned(
        p.lat as f64 * 1e-7,
        p.lon as f64 * 1e-7,
        p.alt_mm as f64 * 1e-3,
        geo,
    );
    GpsFix {
        position,
        velocity: Vector3::new(p.vel_n as f64, p.vel_e as f64, p.vel_d as f64) * 0.01,
        t: p.t_usec as f64 * 1e-6,
        origin: FixOrigin::Spoofed,
    }
}

/// Encodes a fix as a gps inject frame.
pub fn encode(fix: &GpsFix, geo: &GeoRef, seq: u8) -> Result<Vec<u8>, EncodeError> {
    let payload = payload_from_fix(fix, geo)?;
    RawFrame {
        seq,
        sysid: DEFAULT_SYSID,
        compid: DEFAULT_COMPID,
        msgid: GPS_INJECT_MSGID,
        payload: payload.pack().to_vec(),
    }
    .to_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedFix {
    pub fix: GpsFix,
    pub seq: u8,
    pub payload: GpsInjectPayload,
}

/// Decodes exactly one gps inject frame.
pub fn decode(bytes: &[u8], geo: &GeoRef) -> Result<DecodedFix, DecodeError> {
    let (frame, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - used));
    }
    if frame.msgid != GPS_INJECT_MSGID {
        return Err(DecodeError::NotGpsInject(frame.msgid));
    }
    let mut b = [0u8; GPS_INJECT_PAYLOAD_LEN];
    b.copy_from_slice(&frame.payload);
    let payload = GpsInjectPayload::unpack(&b);
    Ok(DecodedFix {
        fix: fix_from_payload(&payload, geo),
        seq: frame.seq,
        payload,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgClass {
    GpsInject,
    Heartbeat,
    Other,
}

impl MsgClass {
    pub fn of(msgid: u32) -> Self {
        match msgid {
            GPS_INJECT_MSGID => Self::GpsInject,
            HEARTBEAT_MSGID => Self::Heartbeat,
            _ => Self::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxSchedule {
    pub allowed_msg_classes: BTreeSet<MsgClass>,
    pub epoch_period: f64,
    pub max_frames_per_epoch: usize,
}

impl Default for TxSchedule {
    fn default() -> Self {
        Self {
            allowed_msg_classes: BTreeSet::from([MsgClass::GpsInject]),
            epoch_period: 0.2,
            max_frames_per_epoch: 1,
        }
    }
}

impl TxSchedule {
    pub fn allows(&self, class: MsgClass) -> bool {
        class == MsgClass::GpsInject || self.allowed_msg_classes.contains(&class)
    }
}

/// Frames to send this epoch: disallowed classes dropped, gps inject frames
/// first, each group in wrapping sequence order, capped per epoch.
pub fn schedule_tx(sched: &TxSchedule, pending: &[RawFrame]) -> Vec<RawFrame> {
    let Some(base) = pending.first().map(|f| f.seq) else {
        return Vec::new();
    };
    let mut out: Vec<&RawFrame> = pending.iter().filter(|f| sched.allows(f.class())).collect();
    out.sort_by_key(|f| (f.class() != MsgClass::GpsInject, f.seq.wrapping_sub(base)));
    out.into_iter()
        .take(sched.max_frames_per_epoch.max(1))
        .cloned()
        .collect()
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: record {index} truncated")]
    Truncated { path: PathBuf, index: usize },
}

pub fn write_capture(path: &Path, frames: &[Vec<u8>]) -> Result<(), CaptureError> {
    let io_err = |source| CaptureError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for f in frames {
        w.write_all(&(f.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(f).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_capture(path: &Path) -> Result<Vec<Vec<u8>>, CaptureError> {
    let data = fs::read(path).map_err(|source| CaptureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    let mut rest = data.as_slice();
    while !rest.is_empty() {
        let truncated = || CaptureError::Truncated {
            path: path.to_path_buf(),
            index: out.len(),
        };
        if rest.len() < 4 {
            return Err(truncated());
        }
        let n = u32::from_le_bytes([rest[0], rest[1], rest[2], rest[3]]) as usize;
        if rest.len() - 4 < n {
            return Err(truncated());
        }
        out.push(rest[4..4 + n].to_vec());
        rest = &rest[4 + n..];
    }
    Ok(out)
}
