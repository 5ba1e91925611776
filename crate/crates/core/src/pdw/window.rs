use super::record::{PdwRecord, N_VARS};
use crate::error::{Error, Result};

/// `len` consecutive pulses in variable order, toa relative to the first pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub values: Vec<[f64; N_VARS]>,
    pub labels: Vec<u16>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn from_slice(pulses: &[PdwRecord]) -> Self {
        let origin = pulses.first().map_or(0.0, |p| p.toa);
        let values = pulses
            .iter()
            .map(|p| {
                let mut v = p.values();
                v[0] -= origin;
                v
            })
            .collect();
        Window {
            values,
            labels: pulses.iter().map(|p| p.label).collect(),
        }
    }
}

pub fn window_count(len: usize, window_len: usize, stride: usize) -> usize {
    if len < window_len || window_len == 0 || stride == 0 {
        0
    } else {
        (len - window_len) / stride + 1
    }
}

/// Sliding windows of `window_len` pulses every `stride` pulses.
pub fn windowize(stream: &[PdwRecord], window_len: usize, stride: usize) -> Result<Vec<Window>> {
    if window_len == 0 || stride == 0 {
        return Err(Error::config("scenario.window_len", "window length and stride must be positive"));
    }
    if stride > window_len {
        return Err(Error::config("scenario.window_stride", "stride must not exceed the window length"));
    }
    if stream.len() < window_len {
        return Err(Error::Precondition(format!(
            "stream has {} pulses, fewer than the window length {window_len}; use a smaller window length",
            stream.len()
        )));
    }
    Ok((0..window_count(stream.len(), window_len, stride))
        .map(|w| Window::from_slice(&stream[w * stride..w * stride + window_len]))
        .collect())
}
