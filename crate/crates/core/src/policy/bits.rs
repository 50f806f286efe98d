//! MSB-first bit packing.

use super::CodecError;

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bits: Vec<bool>,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, value: u32, width: usize) {
        debug_assert!(width <= 32);
        debug_assert!(
            width == 32 || value >> width == 0,
            "{value} does not fit {width} bits"
        );
        self.bits
            .extend((0..width).rev().map(|i| (value >> i) & 1 == 1));
    }

    pub fn write_bits(&mut self, bits: &[bool]) {
        self.bits.extend_from_slice(bits);
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    /// Zero-padded to a whole number of bytes.
    pub fn into_bytes(self) -> Vec<u8> {
        pack(&self.bits)
    }
}

pub fn pack(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))
        })
        .collect()
}

pub fn unpack(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&byte| (0..8).rev().map(move |i| (byte >> i) & 1 == 1))
        .collect()
}

pub struct BitReader<'a> {
    bits: &'a [bool],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bits: &'a [bool]) -> Self {
        BitReader { bits, pos: 0 }
    }

    pub fn read(&mut self, width: usize) -> Result<u32, CodecError> {
        let slice = self.take(width)?;
        Ok(slice.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b)))
    }

    pub fn take(&mut self, width: usize) -> Result<&'a [bool], CodecError> {
        if self.remaining() < width {
            return Err(CodecError::Truncated {
                needed: self.pos + width,
                available: self.bits.len(),
            });
        }
        let slice = &self.bits[self.pos..self.pos + width];
        self.pos += width;
        Ok(slice)
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    pub fn rest(&self) -> &'a [bool] {
        &self.bits[self.pos..]
    }
}
