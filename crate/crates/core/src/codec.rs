//! Bit-packed binary formats for message bags and dataset files.
//!
//! Layout contracts:
//! - FE1 message: `u - 1` in `ceil(log2(q-1))` bits, `v` in `ceil(log2 q)`
//!   bits, `w` in `ceil(log2 b)` bits; little-endian bit order, each message
//!   padded to a byte boundary.
//! - FE0 message: `value - 1` in `ceil(log2 B)` bits, padded likewise.
//! - HHD message: layer index (0-based) in `ceil(log2 log2 B)` bits, one
//!   discriminant bit (0 = direct prefix, 1 = hash triple), then the layer's
//!   FE packing; padded per message.
//! - Bags: header `magic, version, variant, n, B, b, q, count`, then packed
//!   messages. Datasets: header `magic, version, n, B, seed, spec`, then the
//!   values packed back to back (no per-value padding).

use crate::error::{Error, Result};
use crate::fe::{Fe0Message, Fe1Message, MessageBag};
use crate::hhd::{HhdMessage, LayerPayload};
use crate::params::{FeParams, FeVariant, HhdParams};
use crate::sim::{Dataset, DatasetSpec};

const BAG_MAGIC: &[u8; 4] = b"SDPB";
const DATASET_MAGIC: &[u8; 4] = b"SDPD";
const FORMAT_VERSION: u8 = 1;

/// Bits needed to address `count` distinct values (0 when there is only one).
pub fn bits_for(count: u64) -> u32 {
    if count <= 1 {
        0
    } else {
        64 - (count - 1).leading_zeros()
    }
}

/// Little-endian bit writer: bit k of a byte is `(byte >> k) & 1`.
pub struct BitWriter {
    buf: Vec<u8>,
    current: u8,
    filled: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        BitWriter { buf: Vec::new(), current: 0, filled: 0 }
    }

    pub fn write_bits(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value < (1u64 << width).max(1));
        for k in 0..width {
            let bit = (value >> k) & 1;
            self.current |= (bit as u8) << self.filled;
            self.filled += 1;
            if self.filled == 8 {
                self.buf.push(self.current);
                self.current = 0;
                self.filled = 0;
            }
        }
    }

    pub fn byte_align(&mut self) {
        if self.filled > 0 {
            self.buf.push(self.current);
            self.current = 0;
            self.filled = 0;
        }
    }

    pub fn into_bytes(mut self) -> Vec<u8> {
        self.byte_align();
        self.buf
    }
}

impl Default for BitWriter {
    fn default() -> Self {
        Self::new()
    }
}

pub struct BitReader<'a> {
    buf: &'a [u8],
    pos: usize,
    bit: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        BitReader { buf, pos: 0, bit: 0 }
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u64> {
        let mut value = 0u64;
        for k in 0..width {
            if self.pos >= self.buf.len() {
                return Err(Error::Codec("unexpected end of input".into()));
            }
            let bit = (self.buf[self.pos] >> self.bit) & 1;
            value |= (bit as u64) << k;
            self.bit += 1;
            if self.bit == 8 {
                self.bit = 0;
                self.pos += 1;
            }
        }
        Ok(value)
    }

    pub fn byte_align(&mut self) {
        if self.bit > 0 {
            self.bit = 0;
            self.pos += 1;
        }
    }

    pub fn bytes_consumed(&self) -> usize {
        self.pos + (self.bit > 0) as usize
    }
}

fn push_u64(buf: &mut Vec<u8>, value: u64) {
    buf.extend_from_slice(&value.to_le_bytes());
}

fn read_u64(buf: &[u8], offset: &mut usize) -> Result<u64> {
    let end = *offset + 8;
    if end > buf.len() {
        return Err(Error::Codec("truncated header".into()));
    }
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&buf[*offset..end]);
    *offset = end;
    Ok(u64::from_le_bytes(bytes))
}

fn bag_header(variant: u8, params: &FeParams, count: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 2 + 5 * 8);
    out.extend_from_slice(BAG_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(variant);
    push_u64(&mut out, params.n);
    push_u64(&mut out, params.domain_size);
    push_u64(&mut out, params.bins);
    push_u64(&mut out, params.prime);
    push_u64(&mut out, count);
    out
}

fn check_bag_header(buf: &[u8], want_variant: u8, params: &FeParams) -> Result<(u64, usize)> {
    if buf.len() < 6 || &buf[..4] != BAG_MAGIC {
        return Err(Error::Codec("not a message-bag file".into()));
    }
    if buf[4] != FORMAT_VERSION {
        return Err(Error::Codec(format!("unsupported format version {}", buf[4])));
    }
    if buf[5] != want_variant {
        return Err(Error::invalid_input(
            "message bag variant does not match the requested analyzer",
        ));
    }
    let mut offset = 6;
    let n = read_u64(buf, &mut offset)?;
    let domain = read_u64(buf, &mut offset)?;
    let bins = read_u64(buf, &mut offset)?;
    let prime = read_u64(buf, &mut offset)?;
    let count = read_u64(buf, &mut offset)?;
    if n != params.n || domain != params.domain_size || bins != params.bins
        || prime != params.prime
    {
        return Err(Error::invalid_input(
            "message bag header does not match the supplied parameters",
        ));
    }
    Ok((count, offset))
}

/// Serialize an FE0 bag: header then `value - 1` in `ceil(log2 B)` bits per
/// message, byte-padded per message.
pub fn encode_fe0_bag(bag: &MessageBag<Fe0Message>, params: &FeParams) -> Vec<u8> {
    let mut out = bag_header(0, params, bag.len() as u64);
    let width = bits_for(params.domain_size);
    let mut writer = BitWriter::new();
    for m in bag.iter() {
        writer.write_bits(m.value - 1, width);
        writer.byte_align();
    }
    out.extend_from_slice(&writer.into_bytes());
    out
}

pub fn decode_fe0_bag(buf: &[u8], params: &FeParams) -> Result<MessageBag<Fe0Message>> {
    let (count, offset) = check_bag_header(buf, 0, params)?;
    let width = bits_for(params.domain_size);
    let mut reader = BitReader::new(&buf[offset..]);
    let mut messages = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let value = reader.read_bits(width)? + 1;
        reader.byte_align();
        if value > params.domain_size {
            return Err(Error::Codec(format!("decoded value {value} out of range")));
        }
        messages.push(Fe0Message { value });
    }
    Ok(MessageBag::from(messages))
}

fn write_fe1_message(writer: &mut BitWriter, m: &Fe1Message, q: u64, bins: u64) {
    writer.write_bits(m.u - 1, bits_for(q - 1));
    writer.write_bits(m.v, bits_for(q));
    writer.write_bits(m.w, bits_for(bins));
}

fn read_fe1_message(reader: &mut BitReader, q: u64, bins: u64) -> Result<Fe1Message> {
    let u = reader.read_bits(bits_for(q - 1))? + 1;
    let v = reader.read_bits(bits_for(q))?;
    let w = reader.read_bits(bits_for(bins))?;
    if u >= q || v >= q || w >= bins {
        return Err(Error::Codec("decoded fe1 triple out of range".into()));
    }
    Ok(Fe1Message { u, v, w })
}

/// Serialize an FE1 bag: header then `(u-1, v, w)` packed per message.
pub fn encode_fe1_bag(bag: &MessageBag<Fe1Message>, params: &FeParams) -> Vec<u8> {
    let mut out = bag_header(1, params, bag.len() as u64);
    let mut writer = BitWriter::new();
    for m in bag.iter() {
        write_fe1_message(&mut writer, m, params.prime, params.bins);
        writer.byte_align();
    }
    out.extend_from_slice(&writer.into_bytes());
    out
}

pub fn decode_fe1_bag(buf: &[u8], params: &FeParams) -> Result<MessageBag<Fe1Message>> {
    let (count, offset) = check_bag_header(buf, 1, params)?;
    let mut reader = BitReader::new(&buf[offset..]);
    let mut messages = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let m = read_fe1_message(&mut reader, params.prime, params.bins)?;
        reader.byte_align();
        messages.push(m);
    }
    Ok(MessageBag::from(messages))
}

/// Serialize an HHD bag. Each message carries its 0-based layer index in
/// `ceil(log2 L)` bits and a discriminant bit, then the layer's FE packing.
pub fn encode_hhd_bag(bag: &MessageBag<HhdMessage>, params: &HhdParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BAG_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(2);
    push_u64(&mut out, params.n);
    push_u64(&mut out, params.domain_size);
    push_u64(&mut out, params.bins);
    push_u64(&mut out, 0);
    push_u64(&mut out, bag.len() as u64);
    let layer_width = bits_for(params.layer_count as u64);
    let mut writer = BitWriter::new();
    for m in bag.iter() {
        writer.write_bits((m.layer - 1) as u64, layer_width);
        let lp = params.layer(m.layer);
        match m.payload {
            LayerPayload::Direct { value } => {
                writer.write_bits(0, 1);
                writer.write_bits(value, bits_for(lp.domain_size));
            }
            LayerPayload::Hashed { u, v, w } => {
                writer.write_bits(1, 1);
                write_fe1_message(&mut writer, &Fe1Message { u, v, w }, lp.prime, lp.bins);
            }
        }
        writer.byte_align();
    }
    out.extend_from_slice(&writer.into_bytes());
    out
}

pub fn decode_hhd_bag(buf: &[u8], params: &HhdParams) -> Result<MessageBag<HhdMessage>> {
    if buf.len() < 6 || &buf[..4] != BAG_MAGIC {
        return Err(Error::Codec("not a message-bag file".into()));
    }
    if buf[4] != FORMAT_VERSION || buf[5] != 2 {
        return Err(Error::invalid_input("not an hhd bag"));
    }
    let mut offset = 6;
    let n = read_u64(buf, &mut offset)?;
    let domain = read_u64(buf, &mut offset)?;
    let bins = read_u64(buf, &mut offset)?;
    let _reserved = read_u64(buf, &mut offset)?;
    let count = read_u64(buf, &mut offset)?;
    if n != params.n || domain != params.domain_size || bins != params.bins {
        return Err(Error::invalid_input(
            "hhd bag header does not match the supplied parameters",
        ));
    }
    let layer_width = bits_for(params.layer_count as u64);
    let mut reader = BitReader::new(&buf[offset..]);
    let mut messages = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let layer = reader.read_bits(layer_width)? as u32 + 1;
        if layer > params.layer_count {
            return Err(Error::Codec(format!("decoded layer {layer} out of range")));
        }
        let lp = params.layer(layer);
        let hashed = reader.read_bits(1)? == 1;
        let payload = if hashed {
            if lp.variant != FeVariant::Fe1 {
                return Err(Error::Codec(format!("layer {layer} is not a hashed layer")));
            }
            let m = read_fe1_message(&mut reader, lp.prime, lp.bins)?;
            LayerPayload::Hashed { u: m.u, v: m.v, w: m.w }
        } else {
            if lp.variant != FeVariant::Fe0 {
                return Err(Error::Codec(format!("layer {layer} is not a direct layer")));
            }
            let value = reader.read_bits(bits_for(lp.domain_size))?;
            if value >= lp.domain_size {
                return Err(Error::Codec("decoded prefix out of range".into()));
            }
            LayerPayload::Direct { value }
        };
        reader.byte_align();
        messages.push(HhdMessage { layer, payload });
    }
    Ok(MessageBag::from(messages))
}

/// Serialize a dataset: header (n, B, seed, generator spec), then each value
/// as `value - 1` in `ceil(log2 B)` bits, packed continuously.
pub fn encode_dataset(dataset: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.push(FORMAT_VERSION);
    push_u64(&mut out, dataset.values.len() as u64);
    push_u64(&mut out, dataset.domain_size);
    push_u64(&mut out, dataset.seed);
    match &dataset.spec {
        DatasetSpec::Uniform => out.push(0),
        DatasetSpec::Zipf { exponent } => {
            out.push(1);
            push_u64(&mut out, exponent.to_bits());
        }
        DatasetSpec::Planted { heavy, tail } => {
            out.push(2);
            push_u64(&mut out, heavy.len() as u64);
            for &(element, count) in heavy {
                push_u64(&mut out, element);
                push_u64(&mut out, count);
            }
            push_u64(&mut out, *tail);
        }
    }
    let width = bits_for(dataset.domain_size);
    let mut writer = BitWriter::new();
    for &value in &dataset.values {
        writer.write_bits(value - 1, width);
    }
    out.extend_from_slice(&writer.into_bytes());
    out
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset> {
    if buf.len() < 5 || &buf[..4] != DATASET_MAGIC {
        return Err(Error::Codec("not a dataset file".into()));
    }
    if buf[4] != FORMAT_VERSION {
        return Err(Error::Codec(format!("unsupported format version {}", buf[4])));
    }
    let mut offset = 5;
    let n = read_u64(buf, &mut offset)?;
    let domain_size = read_u64(buf, &mut offset)?;
    let seed = read_u64(buf, &mut offset)?;
    if offset >= buf.len() {
        return Err(Error::Codec("truncated dataset header".into()));
    }
    let tag = buf[offset];
    offset += 1;
    let spec = match tag {
        0 => DatasetSpec::Uniform,
        1 => DatasetSpec::Zipf { exponent: f64::from_bits(read_u64(buf, &mut offset)?) },
        2 => {
            let len = read_u64(buf, &mut offset)?;
            let mut heavy = Vec::with_capacity(len as usize);
            for _ in 0..len {
                let element = read_u64(buf, &mut offset)?;
                let count = read_u64(buf, &mut offset)?;
                heavy.push((element, count));
            }
            let tail = read_u64(buf, &mut offset)?;
            DatasetSpec::Planted { heavy, tail }
        }
        other => return Err(Error::Codec(format!("unknown dataset spec tag {other}"))),
    };
    let width = bits_for(domain_size);
    let mut reader = BitReader::new(&buf[offset..]);
    let mut values = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let value = reader.read_bits(width)? + 1;
        if value > domain_size {
            return Err(Error::Codec(format!("decoded value {value} out of range")));
        }
        values.push(value);
    }
    Ok(Dataset { values, domain_size, spec, seed })
}
