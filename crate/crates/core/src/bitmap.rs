//! Cyclic anti-replay window for one-time token indexes.
//!
//! An `n`-cell bitmap tracks the indexes `start..=end` (`end = start + n - 1`).
//! Cell `startPtr` holds the status of `start`, and the remaining cells follow
//! cyclically, so index `i` in the window lives at
//! `(startPtr + i - start) mod n`. Indexes below `start` are always rejected;
//! indexes beyond `end` slide the window forward, and indexes more than `n`
//! past `end` reset it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitmapError {
    #[error("bitmap size must be at least one bit")]
    InvalidSize,
    #[error("no free cell at distance >= {0} from startPtr")]
    NoFreeCell(u64),
    #[error("malformed bitmap dump: {0}")]
    BadDump(String),
}

/// Fixed-size bit array backing the window.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cells {
    words: Vec<u64>,
    len: usize,
}

impl Cells {
    pub fn zeroed(len: usize) -> Self {
        Cells { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut cells = Cells::zeroed(bits.len());
        for (k, &b) in bits.iter().enumerate() {
            if b {
                cells.set(k);
            }
        }
        cells
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, k: usize) -> bool {
        self.words[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn set(&mut self, k: usize) {
        self.words[k / 64] |= 1 << (k % 64);
    }

    pub fn clear(&mut self, k: usize) {
        self.words[k / 64] &= !(1 << (k % 64));
    }

    pub fn clear_all(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Cell `k` is bit `7 - k % 8` of byte `k / 8`.
    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.len.div_ceil(8)];
        for k in (0..self.len).filter(|&k| self.get(k)) {
            bytes[k / 8] |= 0x80 >> (k % 8);
        }
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Self, BitmapError> {
        let bytes = hex::decode(s).map_err(|e| BitmapError::BadDump(e.to_string()))?;
        if bytes.len() != len.div_ceil(8) {
            return Err(BitmapError::BadDump(format!("{} bytes for {len} cells", bytes.len())));
        }
        let mut cells = Cells::zeroed(len);
        for (k, byte) in bytes.iter().enumerate() {
            for bit in 0..8 {
                if byte & (0x80 >> bit) != 0 {
                    let cell = k * 8 + bit;
                    if cell >= len {
                        return Err(BitmapError::BadDump("bit set past the last cell".into()));
                    }
                    cells.set(cell);
                }
            }
        }
        Ok(cells)
    }
}

/// Outcome of presenting a one-time index to the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Accepted,
    /// Index is inside the window and already marked.
    AlreadyUsed,
    /// Index fell behind the window (token miss); the holder must re-apply.
    Missed,
}

impl Check {
    pub fn accepted(self) -> bool {
        self == Check::Accepted
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitmapState {
    cells: Cells,
    start: u64,
    end: u64,
    start_ptr: u64,
    end_ptr: u64,
}

/// Smallest cell `j` (ordered by cyclic distance from `start_ptr`) that is
/// clear and lies at least `i - end` cells past `start_ptr`.
///
/// Requires `end < i <= end + n`.
pub fn seek(cells: &Cells, i: u64, end: u64, start_ptr: u64) -> Result<u64, BitmapError> {
    let n = cells.len() as u64;
    debug_assert!(i > end && i - end <= n);
    let min_shift = i - end;
    (min_shift..n)
        .map(|dist| (start_ptr + dist) % n)
        .find(|&j| !cells.get(j as usize))
        .ok_or(BitmapError::NoFreeCell(min_shift))
}

impl BitmapState {
    pub fn new(n: u64) -> Result<Self, BitmapError> {
        if n == 0 {
            return Err(BitmapError::InvalidSize);
        }
        Ok(BitmapState { cells: Cells::zeroed(n as usize), start: 0, end: n - 1, start_ptr: 0, end_ptr: n - 1 })
    }

    /// Rebuilds a state from its parts; `end` and `endPtr` are derived.
    pub fn from_parts(cells: Cells, start: u64, start_ptr: u64) -> Result<Self, BitmapError> {
        let n = cells.len() as u64;
        if n == 0 {
            return Err(BitmapError::InvalidSize);
        }
        if start_ptr >= n {
            return Err(BitmapError::BadDump(format!("startPtr {start_ptr} out of range for n={n}")));
        }
        Ok(BitmapState { cells, start, end: start + n - 1, start_ptr, end_ptr: (start_ptr + n - 1) % n })
    }

    pub fn size(&self) -> u64 {
        self.cells.len() as u64
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn end(&self) -> u64 {
        self.end
    }

    pub fn start_ptr(&self) -> u64 {
        self.start_ptr
    }

    pub fn end_ptr(&self) -> u64 {
        self.end_ptr
    }

    pub fn cells(&self) -> &Cells {
        &self.cells
    }

    /// `(start, end, startPtr, endPtr)`.
    pub fn window(&self) -> (u64, u64, u64, u64) {
        (self.start, self.end, self.start_ptr, self.end_ptr)
    }

    fn cell_of(&self, i: u64) -> usize {
        ((self.start_ptr + (i - self.start)) % self.size()) as usize
    }

    /// Whether `i` would be accepted, without changing the state.
    pub fn is_unused(&self, i: u64) -> bool {
        if i < self.start {
            false
        } else if i <= self.end {
            !self.cells.get(self.cell_of(i))
        } else {
            true
        }
    }

    pub fn check_and_mark(&mut self, i: u64) -> Check {
        let n = self.size();
        if i < self.start {
            return Check::Missed;
        }
        if i <= self.end {
            let t = self.cell_of(i);
            if self.cells.get(t) {
                return Check::AlreadyUsed;
            }
            self.cells.set(t);
            return Check::Accepted;
        }
        if i - self.end <= n {
            if let Ok(new_ptr) = seek(&self.cells, i, self.end, self.start_ptr) {
                // Cells between the old and new startPtr hold indexes that
                // leave the window; they are recycled for the new tail.
                let shift = (new_ptr + n - self.start_ptr) % n;
                for k in 0..shift {
                    self.cells.clear(((self.start_ptr + k) % n) as usize);
                }
                self.start += shift;
                self.end = self.start + n - 1;
                self.start_ptr = new_ptr;
                self.end_ptr = (new_ptr + n - 1) % n;
                let t = self.cell_of(i);
                self.cells.set(t);
                return Check::Accepted;
            }
        }
        self.cells.clear_all();
        self.start = i;
        self.end = i + n - 1;
        self.start_ptr = 0;
        self.end_ptr = n - 1;
        self.cells.set(0);
        Check::Accepted
    }

    pub fn dump(&self) -> BitmapDump {
        BitmapDump {
            n: self.size(),
            bits: self.cells.to_hex(),
            start: self.start,
            end: self.end,
            start_ptr: self.start_ptr,
            end_ptr: self.end_ptr,
        }
    }

    pub fn from_dump(d: &BitmapDump) -> Result<Self, BitmapError> {
        let cells = Cells::from_hex(&d.bits, d.n as usize)?;
        let state = BitmapState::from_parts(cells, d.start, d.start_ptr)?;
        if state.end != d.end || state.end_ptr != d.end_ptr {
            return Err(BitmapError::BadDump("end/endPtr inconsistent with start/startPtr".into()));
        }
        Ok(state)
    }
}

/// Serialized form used in simulator state dumps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BitmapDump {
    pub n: u64,
    pub bits: String,
    pub start: u64,
    pub end: u64,
    pub start_ptr: u64,
    pub end_ptr: u64,
}

/// Window size that never misses an unused, unexpired token:
/// `ceil(token_lifetime_s * max_tx_per_s)`.
pub fn required_bits(token_lifetime_s: f64, max_tx_per_s: f64) -> u64 {
    assert!(token_lifetime_s > 0.0 && max_tx_per_s > 0.0, "both factors must be positive");
    let product = token_lifetime_s * max_tx_per_s;
    // Decimal rates such as 0.35 are not exact in binary; snap products that
    // are integral up to rounding noise.
    let nearest = product.round();
    if (product - nearest).abs() <= 1e-9 * product.max(1.0) {
        nearest as u64
    } else {
        product.ceil() as u64
    }
}

/// Storage footprint in KiB.
pub fn bits_to_kib(bits: u64) -> f64 {
    bits as f64 / 8.0 / 1024.0
}
