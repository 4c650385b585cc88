//! Binary frame encoding for coordinator/worker messages.
//!
//! Every frame is little-endian:
//!
//! ```text
//! u32  body length in bytes (everything after this field)
//! u32  iteration
//! u16  layer (1-based; 0 for control frames)
//! u8   kind: 0 = Gram contribution, 1 = weight broadcast, 2 = control
//! u16  worker id (sender for Gram/control-from-worker, recipient otherwise)
//! ...  payload
//! ```
//!
//! Payloads:
//!
//! * Gram contribution: `u32 rows, u32 cols`, then `rows·cols` f64 for
//!   `C = z aᵀ`, then `cols·cols` f64 for `G = a aᵀ`, both row-major.
//! * Weight broadcast: `u32 rows, u32 cols`, then `rows·cols` f64.
//! * Control: `u8 code` then
//!   * `0` proceed: `u8 update_lambda`
//!   * `1` report: `f64 objective, u64 correct`
//!   * `2` shutdown: nothing
//!   * `3` abort: UTF-8 diagnostic to the end of the frame

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Bytes before the payload: length prefix plus the fixed header.
pub const HEADER_BYTES: usize = 4 + 4 + 2 + 1 + 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Gram = 0,
    Weights = 1,
    Control = 2,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Control {
    Proceed { update_lambda: bool },
    Report { objective: f64, correct: u64 },
    Shutdown,
    Abort(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Body<T> {
    Gram { c: Matrix<T>, g: Matrix<T> },
    Weights(Matrix<T>),
    Control(Control),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WireMessage<T> {
    pub iteration: u32,
    pub layer: u16,
    pub worker: u16,
    pub body: Body<T>,
}

impl<T> WireMessage<T> {
    pub fn kind(&self) -> Kind {
        match self.body {
            Body::Gram { .. } => Kind::Gram,
            Body::Weights(_) => Kind::Weights,
            Body::Control(_) => Kind::Control,
        }
    }
}

fn put_matrix<T: Scalar>(out: &mut Vec<u8>, m: &Matrix<T>) {
    for v in m.as_slice() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

pub fn encode<T: Scalar>(msg: &WireMessage<T>) -> Vec<u8> {
    let mut out = vec![0u8; 4];
    out.extend_from_slice(&msg.iteration.to_le_bytes());
    out.extend_from_slice(&msg.layer.to_le_bytes());
    out.push(msg.kind() as u8);
    out.extend_from_slice(&msg.worker.to_le_bytes());
    match &msg.body {
        Body::Gram { c, g } => {
            out.extend_from_slice(&(c.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(c.cols() as u32).to_le_bytes());
            put_matrix(&mut out, c);
            put_matrix(&mut out, g);
        }
        Body::Weights(w) => {
            out.extend_from_slice(&(w.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(w.cols() as u32).to_le_bytes());
            put_matrix(&mut out, w);
        }
        Body::Control(ctl) => match ctl {
            Control::Proceed { update_lambda } => {
                out.push(0);
                out.push(u8::from(*update_lambda));
            }
            Control::Report { objective, correct } => {
                out.push(1);
                out.extend_from_slice(&objective.to_le_bytes());
                out.extend_from_slice(&correct.to_le_bytes());
            }
            Control::Shutdown => out.push(2),
            Control::Abort(msg) => {
                out.push(3);
                out.extend_from_slice(msg.as_bytes());
            }
        },
    }
    let body_len = (out.len() - 4) as u32;
    out[..4].copy_from_slice(&body_len.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Protocol(format!("frame truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Result<Matrix<T>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(T::lit(self.f64()?));
        }
        Matrix::from_vec(rows, cols, data).map_err(|e| Error::Protocol(e.to_string()))
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
}

pub fn decode<T: Scalar>(frame: &[u8]) -> Result<WireMessage<T>> {
    let mut r = Reader { buf: frame, pos: 0 };
    let body_len = r.u32()? as usize;
    if body_len + 4 != frame.len() {
        return Err(Error::Protocol(format!(
            "length prefix says {body_len} body bytes, frame has {}",
            frame.len().saturating_sub(4)
        )));
    }
    let iteration = r.u32()?;
    let layer = r.u16()?;
    let kind = r.u8()?;
    let worker = r.u16()?;
    let body = match kind {
        0 => {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let c = r.matrix(rows, cols)?;
            let g = r.matrix(cols, cols)?;
            Body::Gram { c, g }
        }
        1 => {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            Body::Weights(r.matrix(rows, cols)?)
        }
        2 => Body::Control(match r.u8()? {
            0 => Control::Proceed { update_lambda: r.u8()? != 0 },
            1 => Control::Report { objective: r.f64()?, correct: r.u64()? },
            2 => Control::Shutdown,
            3 => Control::Abort(String::from_utf8_lossy(r.rest()).into_owned()),
            code => return Err(Error::Protocol(format!("unknown control code {code}"))),
        }),
        other => return Err(Error::Protocol(format!("unknown message kind {other}"))),
    };
    if r.pos != frame.len() {
        return Err(Error::Protocol(format!("{} trailing bytes", frame.len() - r.pos)));
    }
    Ok(WireMessage { iteration, layer, worker, body })
}
