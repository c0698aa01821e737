//! Reader for the IDX binary format used by the MNIST digit files.
//!
//! Header: two zero bytes, a type code, the number of dimensions `d`, then
//! `d` big-endian `u32` sizes. Only unsigned-byte payloads (type `0x08`) are
//! supported.

use std::path::Path;

use crate::error::{Error, Result};

/// An unsigned-byte IDX tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// Number of items along the first dimension.
    pub fn len(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per item (product of the trailing dimensions).
    pub fn item_size(&self) -> usize {
        self.dims.iter().skip(1).product()
    }

    pub fn item(&self, i: usize) -> &[u8] {
        let n = self.item_size();
        &self.data[i * n..(i + 1) * n]
    }
}

fn format_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        msg: msg.into(),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "truncated IDX header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(0, "IDX magic must start with two zero bytes"));
    }
    if bytes[2] != 0x08 {
        return Err(format_err(2, format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(format_err(3, "IDX array has no dimensions"));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(format_err(bytes.len(), "truncated IDX dimension list"));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut total: usize = 1;
    for k in 0..ndim {
        let o = 4 + 4 * k;
        let d = u32::from_be_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        total = total
            .checked_mul(d)
            .ok_or_else(|| format_err(o, "IDX size overflows"))?;
        dims.push(d);
    }
    let have = bytes.len() - header;
    if have < total {
        return Err(format_err(bytes.len(), format!("IDX payload truncated: {have} of {total} bytes")));
    }
    if have > total {
        return Err(format_err(header + total, "trailing bytes after IDX payload"));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn load_idx(path: &Path) -> Result<IdxArray> {
    parse_idx(&std::fs::read(path)?)
}

/// Digit images grouped by label, for rendering handwritten CAPTCHA scenes.
#[derive(Clone, Debug)]
pub struct DigitGlyphs {
    pub width: usize,
    pub height: usize,
    /// `by_digit[d]` holds the images labelled `d`, each `width * height`
    /// bytes.
    pub by_digit: Vec<Vec<Vec<u8>>>,
}

impl DigitGlyphs {
    pub fn from_idx(images: &IdxArray, labels: &IdxArray) -> Result<Self> {
        if images.dims.len() != 3 {
            return Err(format_err(3, "image file must be three-dimensional"));
        }
        if labels.dims.len() != 1 {
            return Err(format_err(3, "label file must be one-dimensional"));
        }
        if images.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let mut by_digit = vec![Vec::new(); 10];
        for i in 0..images.len() {
            let l = labels.data[i];
            if l > 9 {
                return Err(format_err(8 + i, format!("label {l} is not a digit")));
            }
            by_digit[l as usize].push(images.item(i).to_vec());
        }
        if by_digit.iter().any(|v| v.is_empty()) {
            return Err(Error::Contract("every digit needs at least one image".into()));
        }
        Ok(DigitGlyphs {
            width: images.dims[2],
            height: images.dims[1],
            by_digit,
        })
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        Self::from_idx(&load_idx(images)?, &load_idx(labels)?)
    }
}
