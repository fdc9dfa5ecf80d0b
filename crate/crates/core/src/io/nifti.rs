//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) reader and writer.
//!
//! Only the fields needed for 3D scalar volumes are interpreted: dims,
//! pixdim, datatype, scl_slope/scl_inter and the qoffset origin. Files are
//! written little-endian with a zeroed 4-byte extension block, so data always
//! starts at byte 352.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{GridMeta, Mask, Volume};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;

const MAGIC: &[u8; 4] = b"n+1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDatatype {
    Uint8,
    Int16,
    Float32,
}

impl NiftiDatatype {
    pub fn code(self) -> i16 {
        match self {
            NiftiDatatype::Uint8 => 2,
            NiftiDatatype::Int16 => 4,
            NiftiDatatype::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(NiftiDatatype::Uint8),
            4 => Ok(NiftiDatatype::Int16),
            16 => Ok(NiftiDatatype::Float32),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn bytes_per_voxel(self) -> usize {
        match self {
            NiftiDatatype::Uint8 => 1,
            NiftiDatatype::Int16 => 2,
            NiftiDatatype::Float32 => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            NiftiDatatype::Uint8 => "uint8",
            NiftiDatatype::Int16 => "int16",
            NiftiDatatype::Float32 => "float32",
        }
    }
}

/// A decoded image together with the on-disk datatype it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiImage {
    pub volume: Volume,
    pub datatype: NiftiDatatype,
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    let mut reader = BufReader::new(file);
    // Sniff the gzip magic rather than trusting the extension.
    let mut head = [0u8; 2];
    let n = reader.read(&mut head).map_err(|e| Error::io(path, e))?;
    let chained = std::io::Cursor::new(head[..n].to_vec()).chain(reader);
    if n == 2 && head == [0x1f, 0x8b] {
        MultiGzDecoder::new(chained).read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    } else {
        let mut chained = chained;
        chained.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    }
    Ok(buf)
}

struct Fields<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Fields<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.bytes[off..off + N]);
        a
    }

    fn i16(&self, off: usize) -> i16 {
        let a = self.arr::<2>(off);
        if self.big_endian { i16::from_be_bytes(a) } else { i16::from_le_bytes(a) }
    }

    fn f32(&self, off: usize) -> f32 {
        let a = self.arr::<4>(off);
        if self.big_endian { f32::from_be_bytes(a) } else { f32::from_le_bytes(a) }
    }
}

/// Parses a NIfTI-1 image from an in-memory byte buffer.
pub fn decode_nifti(bytes: &[u8]) -> Result<NiftiImage> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::MalformedHeader(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    let raw: [u8; 4] = bytes[0..4].try_into().unwrap();
    let big_endian = if i32::from_le_bytes(raw) == HEADER_SIZE as i32 {
        false
    } else if i32::from_be_bytes(raw) == HEADER_SIZE as i32 {
        true
    } else {
        return Err(Error::MalformedHeader(format!("sizeof_hdr = {}", i32::from_le_bytes(raw))));
    };
    if &bytes[344..348] != MAGIC {
        return Err(Error::MalformedHeader(format!("magic {:?}", &bytes[344..348])));
    }
    let h = Fields { bytes, big_endian };

    let dim: Vec<i16> = (0..8).map(|i| h.i16(40 + 2 * i)).collect();
    match dim[0] {
        3 => {}
        4 if dim[4] == 1 => {}
        4 => return Err(Error::DimensionUnsupported(format!("4D image with dim[4] = {}", dim[4]))),
        n => return Err(Error::DimensionUnsupported(format!("dim[0] = {n}"))),
    }
    if dim[1..4].iter().any(|&d| d < 1) {
        return Err(Error::MalformedHeader(format!("non-positive dims {:?}", &dim[1..4])));
    }
    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];
    let datatype = NiftiDatatype::from_code(h.i16(70))?;
    let spacing = [1, 2, 3].map(|i| h.f32(76 + 4 * i).abs() as f64);
    let spacing = spacing.map(|s| if s > 0.0 { s } else { 1.0 });
    let origin = [268, 272, 276].map(|off| h.f32(off) as f64);
    let meta = GridMeta::new(dims, spacing, origin)?;

    let vox_offset = h.f32(108);
    let offset = if vox_offset >= HEADER_SIZE as f32 { vox_offset as usize } else { VOX_OFFSET };
    let n = meta.len();
    let need = offset + n * datatype.bytes_per_voxel();
    if bytes.len() < need {
        return Err(Error::MalformedHeader(format!("expected {need} bytes, file has {}", bytes.len())));
    }
    let body = &bytes[offset..need];

    let slope = h.f32(112);
    let inter = h.f32(116);
    let rescale = slope != 0.0 && slope != 1.0 && slope.is_finite();
    let data: Vec<f32> = match datatype {
        NiftiDatatype::Uint8 => body.iter().map(|&b| b as f32).collect(),
        NiftiDatatype::Int16 => body
            .chunks_exact(2)
            .map(|c| {
                let a = [c[0], c[1]];
                let raw = if big_endian { i16::from_be_bytes(a) } else { i16::from_le_bytes(a) };
                raw as f32
            })
            .collect(),
        NiftiDatatype::Float32 => body
            .chunks_exact(4)
            .map(|c| {
                let a = [c[0], c[1], c[2], c[3]];
                if big_endian { f32::from_be_bytes(a) } else { f32::from_le_bytes(a) }
            })
            .collect(),
    };
    let data = if rescale && datatype == NiftiDatatype::Int16 {
        data.into_iter().map(|v| slope * v + inter).collect()
    } else {
        data
    };
    Ok(NiftiImage { volume: Volume::new(meta, data)?, datatype })
}

/// Reads an image and reports the datatype stored on disk.
pub fn read_nifti_typed(path: impl AsRef<Path>) -> Result<NiftiImage> {
    decode_nifti(&read_bytes(path.as_ref())?)
}

/// Reads an image as 32-bit reals.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume> {
    Ok(read_nifti_typed(path)?.volume)
}

/// Reads an image and binarizes it (nonzero is foreground).
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    Ok(Mask::from_volume(&read_nifti(path)?))
}

/// Builds the 352-byte header block (348-byte header plus empty extension).
pub fn encode_header(meta: &GridMeta, datatype: NiftiDatatype) -> Result<Vec<u8>> {
    let mut h = vec![0u8; VOX_OFFSET];
    let put_i16 = |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    h[38] = b'r';
    put_i16(&mut h, 40, 3);
    for (i, &d) in meta.dims.iter().enumerate() {
        let d = i16::try_from(d)
            .map_err(|_| Error::DimensionUnsupported(format!("axis {i} has {d} voxels, NIfTI-1 allows 32767")))?;
        put_i16(&mut h, 42 + 2 * i, d);
    }
    for i in 4..8 {
        put_i16(&mut h, 40 + 2 * i, 1);
    }
    put_i16(&mut h, 70, datatype.code());
    put_i16(&mut h, 72, (datatype.bytes_per_voxel() * 8) as i16);
    put_f32(&mut h, 76, 1.0);
    for (i, &s) in meta.spacing.iter().enumerate() {
        put_f32(&mut h, 80 + 4 * i, s as f32);
    }
    put_f32(&mut h, 108, VOX_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    // xyzt_units: millimetres
    h[123] = 2;
    put_i16(&mut h, 252, 1);
    put_i16(&mut h, 254, 1);
    for (i, &o) in meta.origin.iter().enumerate() {
        put_f32(&mut h, 268 + 4 * i, o as f32);
    }
    for row in 0..3 {
        let base = 280 + 16 * row;
        put_f32(&mut h, base + 4 * row, meta.spacing[row] as f32);
        put_f32(&mut h, base + 12, meta.origin[row] as f32);
    }
    h[344..348].copy_from_slice(MAGIC);
    Ok(h)
}

fn encode_data(data: &[f32], datatype: NiftiDatatype) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(data.len() * datatype.bytes_per_voxel());
    match datatype {
        NiftiDatatype::Float32 => {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        NiftiDatatype::Uint8 => {
            for &v in data {
                if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                    return Err(Error::NotRepresentable { value: v, datatype: datatype.name() });
                }
                out.push(v as u8);
            }
        }
        NiftiDatatype::Int16 => {
            for &v in data {
                if v.fract() != 0.0 || !(-32768.0..=32767.0).contains(&v) {
                    return Err(Error::NotRepresentable { value: v, datatype: datatype.name() });
                }
                out.extend_from_slice(&(v as i16).to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn write_file(path: &Path, header: &[u8], body: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = if is_gz(path) {
        // GzEncoder writes mtime 0, so output bytes depend only on content.
        let mut gz = GzEncoder::new(&mut w, Compression::default());
        gz.write_all(header).and_then(|_| gz.write_all(body)).and_then(|_| gz.finish().map(|_| ()))
    } else {
        w.write_all(header).and_then(|_| w.write_all(body))
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes `volume` with an explicit on-disk datatype. Integer datatypes
/// require every value to be an integer within range.
pub fn write_nifti_as(volume: &Volume, datatype: NiftiDatatype, path: impl AsRef<Path>) -> Result<()> {
    let header = encode_header(&volume.meta, datatype)?;
    let body = encode_data(&volume.data, datatype)?;
    write_file(path.as_ref(), &header, &body)
}

/// Types that have a canonical NIfTI encoding.
pub trait NiftiWrite {
    fn write_nifti(&self, path: &Path) -> Result<()>;
}

impl NiftiWrite for Volume {
    fn write_nifti(&self, path: &Path) -> Result<()> {
        write_nifti_as(self, NiftiDatatype::Float32, path)
    }
}

impl NiftiWrite for Mask {
    fn write_nifti(&self, path: &Path) -> Result<()> {
        let header = encode_header(&self.meta, NiftiDatatype::Uint8)?;
        write_file(path, &header, &self.data)
    }
}

/// Writes a `Volume` as float32 or a `Mask` as uint8; gzip iff the path ends
/// in `.gz`.
pub fn write_nifti<T: NiftiWrite + ?Sized>(image: &T, path: impl AsRef<Path>) -> Result<()> {
    image.write_nifti(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(dims: [usize; 3]) -> GridMeta {
        GridMeta::new(dims, [0.75, 0.75, 2.5], [-10.0, 4.5, 100.0]).unwrap()
    }

    #[test]
    fn zero_mask_byte_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nii");
        let m = Mask::zeros(GridMeta::with_dims([2, 2, 2]).unwrap());
        write_nifti(&m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 352 + 8);
        assert_eq!(i32::from_le_bytes(bytes[0..4].try_into().unwrap()), 348);
        assert_eq!(&bytes[344..348], b"n+1\0");
        assert_eq!(i16::from_le_bytes([bytes[70], bytes[71]]), 2);
        assert_eq!(f32::from_le_bytes(bytes[108..112].try_into().unwrap()), 352.0);
        assert!(bytes[348..].iter().all(|&b| b == 0));
    }

    #[test]
    fn gz_and_plain_hold_same_payload() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume::new(meta([3, 2, 2]), (0..12).map(|i| i as f32 * 0.25).collect()).unwrap();
        write_nifti(&v, dir.path().join("a.nii")).unwrap();
        write_nifti(&v, dir.path().join("a.nii.gz")).unwrap();
        let plain = std::fs::read(dir.path().join("a.nii")).unwrap();
        let gz = std::fs::read(dir.path().join("a.nii.gz")).unwrap();
        assert_eq!(&gz[..2], &[0x1f, 0x8b]);
        let mut inflated = Vec::new();
        MultiGzDecoder::new(&gz[..]).read_to_end(&mut inflated).unwrap();
        assert_eq!(plain, inflated);
        assert_eq!(read_nifti(dir.path().join("a.nii.gz")).unwrap(), v);
    }

    #[test]
    fn volume_round_trip_preserves_meta() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.nii.gz");
        let v = Volume::new(meta([4, 3, 2]), (0..24).map(|i| (i as f32).sqrt() - 2.0).collect()).unwrap();
        write_nifti(&v, &path).unwrap();
        let back = read_nifti_typed(&path).unwrap();
        assert_eq!(back.datatype, NiftiDatatype::Float32);
        assert_eq!(back.volume.meta.dims, v.meta.dims);
        assert_eq!(back.volume.meta.origin, v.meta.origin);
        for a in 0..3 {
            assert_eq!(back.volume.meta.spacing[a], v.meta.spacing[a] as f32 as f64);
        }
        assert!(back.volume.data.iter().zip(&v.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    fn patched(meta: &GridMeta, dt: NiftiDatatype, body: &[u8], patch: impl Fn(&mut Vec<u8>)) -> Vec<u8> {
        let mut bytes = encode_header(meta, dt).unwrap();
        bytes.extend_from_slice(body);
        patch(&mut bytes);
        bytes
    }

    #[test]
    fn bad_sizeof_hdr() {
        let b = patched(&GridMeta::with_dims([1, 1, 1]).unwrap(), NiftiDatatype::Uint8, &[0], |b| {
            b[0..4].copy_from_slice(&200i32.to_le_bytes())
        });
        assert!(matches!(decode_nifti(&b), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn bad_magic() {
        let b = patched(&GridMeta::with_dims([1, 1, 1]).unwrap(), NiftiDatatype::Uint8, &[0], |b| b[345] = b'i');
        assert!(matches!(decode_nifti(&b), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn int16_rescale() {
        let raw: Vec<u8> = [3i16, -4].iter().flat_map(|v| v.to_le_bytes()).collect();
        let b = patched(&GridMeta::with_dims([2, 1, 1]).unwrap(), NiftiDatatype::Int16, &raw, |b| {
            b[112..116].copy_from_slice(&2.0f32.to_le_bytes());
            b[116..120].copy_from_slice(&1.0f32.to_le_bytes());
        });
        let img = decode_nifti(&b).unwrap();
        assert_eq!(img.volume.data, vec![7.0, -7.0]);
    }

    #[test]
    fn int16_without_rescale_when_slope_is_one_or_zero() {
        let raw: Vec<u8> = 3i16.to_le_bytes().to_vec();
        for slope in [0.0f32, 1.0] {
            let b = patched(&GridMeta::with_dims([1, 1, 1]).unwrap(), NiftiDatatype::Int16, &raw, |b| {
                b[112..116].copy_from_slice(&slope.to_le_bytes());
                b[116..120].copy_from_slice(&5.0f32.to_le_bytes());
            });
            assert_eq!(decode_nifti(&b).unwrap().volume.data, vec![3.0]);
        }
    }

    #[test]
    fn unsupported_datatype() {
        let b = patched(&GridMeta::with_dims([1, 1, 1]).unwrap(), NiftiDatatype::Uint8, &[0; 8], |b| {
            b[70..72].copy_from_slice(&64i16.to_le_bytes())
        });
        assert!(matches!(decode_nifti(&b), Err(Error::UnsupportedDatatype(64))));
    }

    #[test]
    fn four_d() {
        let g = GridMeta::with_dims([1, 1, 1]).unwrap();
        let ok = patched(&g, NiftiDatatype::Uint8, &[1], |b| b[40..42].copy_from_slice(&4i16.to_le_bytes()));
        assert_eq!(decode_nifti(&ok).unwrap().volume.data, vec![1.0]);
        let bad = patched(&g, NiftiDatatype::Uint8, &[1, 1], |b| {
            b[40..42].copy_from_slice(&4i16.to_le_bytes());
            b[48..50].copy_from_slice(&2i16.to_le_bytes());
        });
        assert!(matches!(decode_nifti(&bad), Err(Error::DimensionUnsupported(_))));
    }

    #[test]
    fn big_endian_read() {
        let mut b = vec![0u8; 352];
        b[0..4].copy_from_slice(&348i32.to_be_bytes());
        b[40..42].copy_from_slice(&3i16.to_be_bytes());
        for i in 1..4 {
            b[40 + 2 * i..42 + 2 * i].copy_from_slice(&1i16.to_be_bytes());
        }
        b[70..72].copy_from_slice(&16i16.to_be_bytes());
        for i in 1..4 {
            b[76 + 4 * i..80 + 4 * i].copy_from_slice(&1.0f32.to_be_bytes());
        }
        b[108..112].copy_from_slice(&352.0f32.to_be_bytes());
        b[344..348].copy_from_slice(MAGIC);
        b.extend_from_slice(&1.5f32.to_be_bytes());
        assert_eq!(decode_nifti(&b).unwrap().volume.data, vec![1.5]);
    }

    #[test]
    fn truncated_body() {
        let b = patched(&GridMeta::with_dims([2, 2, 2]).unwrap(), NiftiDatatype::Uint8, &[0; 3], |_| {});
        assert!(matches!(decode_nifti(&b), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn unwritable_path() {
        let m = Mask::zeros(GridMeta::with_dims([1, 1, 1]).unwrap());
        let err = write_nifti(&m, "/nonexistent-dir/x/m.nii").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn integer_datatypes_reject_fractions() {
        let v = Volume::new(GridMeta::with_dims([1, 1, 1]).unwrap(), vec![0.5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(write_nifti_as(&v, NiftiDatatype::Uint8, dir.path().join("a.nii")).is_err());
        assert!(write_nifti_as(&v, NiftiDatatype::Int16, dir.path().join("a.nii")).is_err());
    }
}
