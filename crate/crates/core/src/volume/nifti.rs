//! NIfTI-1 single-file (`.nii`, `.nii.gz`) reader and writer.
//!
//! Little-endian only; uint8, int16 and float32 payloads. The voxel-to-world
//! transform comes from the sform when `sform_code > 0`, otherwise from the
//! qform, otherwise from `pixdim` alone.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian as LE};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{Alphabet, DType, Geometry, LabelVolume, Mask, Volume, VoxelData};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const NIFTI_XFORM_SCANNER_ANAT: i16 = 1;
const NIFTI_UNITS_MM: u8 = 2;

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    decode(path, &bytes)
}

/// Read a label map and validate it against `alphabet`.
pub fn read_labels(path: impl AsRef<Path>, alphabet: &Alphabet) -> Result<LabelVolume> {
    let path = path.as_ref();
    let v = read_volume(path)?;
    LabelVolume::from_volume(&v, alphabet.clone()).map_err(|e| Error::nifti(path, e.to_string()))
}

/// Read any volume as a binary mask (non-zero is foreground).
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let v = read_volume(path)?;
    let data = (0..v.geometry().len()).map(|i| v.get(i) != 0.0).collect();
    Mask::new(v.geometry().clone(), data)
}

pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(volume);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let gz = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("gz"))
        .unwrap_or(false);
    let res = if gz {
        let mut enc = GzEncoder::new(&mut w, Compression::default());
        enc.write_all(&bytes).and_then(|_| enc.finish().map(|_| ()))
    } else {
        w.write_all(&bytes)
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_labels(labels: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    write_volume(&labels.to_volume(), path)
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        MultiGzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::nifti(path, format!("gzip decode failed: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn decode(path: &Path, b: &[u8]) -> Result<Volume> {
    if b.len() < HEADER_SIZE {
        return Err(Error::nifti(
            path,
            format!("file too small for a NIfTI-1 header ({} bytes)", b.len()),
        ));
    }
    let sizeof_hdr = LE::read_i32(&b[0..4]);
    if sizeof_hdr != HEADER_SIZE as i32 {
        if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
            return Err(Error::nifti(path, "big-endian NIfTI files are not supported"));
        }
        return Err(Error::nifti(path, format!("bad sizeof_hdr {sizeof_hdr}")));
    }
    if &b[344..347] != b"n+1" && &b[344..347] != b"ni1" {
        return Err(Error::nifti(path, "missing NIfTI-1 magic"));
    }
    if &b[344..347] == b"ni1" {
        return Err(Error::nifti(path, "two-file (.hdr/.img) NIfTI is not supported"));
    }

    let mut dim = [0i16; 8];
    for (k, d) in dim.iter_mut().enumerate() {
        *d = LE::read_i16(&b[40 + 2 * k..]);
    }
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::nifti(path, format!("bad dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 3];
    for a in 0..3 {
        if (a as i16) < ndim {
            let d = dim[a + 1];
            if d < 1 {
                return Err(Error::nifti(path, format!("bad dim[{}] = {d}", a + 1)));
            }
            dims[a] = d as usize;
        }
    }
    for k in 4..=(ndim as usize) {
        if dim[k] > 1 {
            return Err(Error::nifti(
                path,
                format!("only 3D volumes are supported (dim[{k}] = {})", dim[k]),
            ));
        }
    }

    let code = LE::read_i16(&b[70..72]);
    let dtype = match code {
        2 => DType::U8,
        4 => DType::I16,
        16 => DType::F32,
        other => {
            return Err(Error::nifti(path, format!("unsupported dtype code {other}")));
        }
    };

    let mut pixdim = [0f32; 8];
    for (k, p) in pixdim.iter_mut().enumerate() {
        *p = LE::read_f32(&b[76 + 4 * k..]);
    }
    let vox_offset = LE::read_f32(&b[108..112]);
    let scl_slope = LE::read_f32(&b[112..116]);
    let scl_inter = LE::read_f32(&b[116..120]);
    let qform_code = LE::read_i16(&b[252..254]);
    let sform_code = LE::read_i16(&b[254..256]);

    let affine = if sform_code > 0 {
        let mut a = [[0.0; 4]; 4];
        for (r, row) in a.iter_mut().take(3).enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = LE::read_f32(&b[280 + 16 * r + 4 * c..]) as f64;
            }
        }
        a[3][3] = 1.0;
        a
    } else if qform_code > 0 {
        let q = [
            LE::read_f32(&b[256..]) as f64,
            LE::read_f32(&b[260..]) as f64,
            LE::read_f32(&b[264..]) as f64,
        ];
        let offset = [
            LE::read_f32(&b[268..]) as f64,
            LE::read_f32(&b[272..]) as f64,
            LE::read_f32(&b[276..]) as f64,
        ];
        qform_affine(q, offset, &pixdim)
    } else {
        let mut a = [[0.0; 4]; 4];
        for i in 0..3 {
            a[i][i] = pixdim[i + 1].abs() as f64;
        }
        a[3][3] = 1.0;
        a
    };
    let geometry = Geometry::from_affine(dims, &affine).map_err(|e| Error::nifti(path, e.to_string()))?;

    let n = geometry.len();
    let offset = if vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32 {
        vox_offset as usize
    } else {
        VOX_OFFSET
    };
    let nbytes = n * (dtype.bits() as usize / 8);
    if b.len() < offset + nbytes {
        return Err(Error::nifti(
            path,
            format!(
                "truncated voxel data: need {} bytes after offset {offset}, have {}",
                nbytes,
                b.len().saturating_sub(offset)
            ),
        ));
    }
    let payload = &b[offset..offset + nbytes];
    let mut data = match dtype {
        DType::U8 => VoxelData::U8(payload.to_vec()),
        DType::I16 => {
            let mut v = vec![0i16; n];
            LE::read_i16_into(payload, &mut v);
            VoxelData::I16(v)
        }
        DType::F32 => {
            let mut v = vec![0f32; n];
            LE::read_f32_into(payload, &mut v);
            VoxelData::F32(v)
        }
    };
    let scaled = scl_slope != 0.0 && scl_slope.is_finite() && (scl_slope != 1.0 || scl_inter != 0.0);
    if scaled {
        data = VoxelData::F32((0..n).map(|i| (data.get(i) as f32) * scl_slope + scl_inter).collect());
    }
    Volume::new(geometry, data).map_err(|e| Error::nifti(path, e.to_string()))
}

/// Standard NIfTI quaternion-to-affine conversion.
fn qform_affine(q: [f64; 3], offset: [f64; 3], pixdim: &[f32; 8]) -> [[f64; 4]; 4] {
    let [b, c, d] = q;
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    let r = [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ];
    let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
    let s = [
        pixdim[1].abs() as f64,
        pixdim[2].abs() as f64,
        pixdim[3].abs() as f64 * qfac,
    ];
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j] * s[j];
        }
        m[i][3] = offset[i];
    }
    m[3][3] = 1.0;
    m
}

/// Quaternion (b, c, d) and qfac of a proper or improper rotation.
fn rotation_to_quaternion(dir: &[[f64; 3]; 3]) -> ([f64; 3], f64) {
    let det = dir[0][0] * (dir[1][1] * dir[2][2] - dir[1][2] * dir[2][1])
        - dir[0][1] * (dir[1][0] * dir[2][2] - dir[1][2] * dir[2][0])
        + dir[0][2] * (dir[1][0] * dir[2][1] - dir[1][1] * dir[2][0]);
    let mut r = *dir;
    let qfac = if det < 0.0 {
        for row in r.iter_mut() {
            row[2] = -row[2];
        }
        -1.0
    } else {
        1.0
    };
    let trace = r[0][0] + r[1][1] + r[2][2];
    let (a, mut b, mut c, mut d);
    if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        a = 0.25 * s;
        b = (r[2][1] - r[1][2]) / s;
        c = (r[0][2] - r[2][0]) / s;
        d = (r[1][0] - r[0][1]) / s;
    } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
        let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
        a = (r[2][1] - r[1][2]) / s;
        b = 0.25 * s;
        c = (r[0][1] + r[1][0]) / s;
        d = (r[0][2] + r[2][0]) / s;
    } else if r[1][1] > r[2][2] {
        let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
        a = (r[0][2] - r[2][0]) / s;
        b = (r[0][1] + r[1][0]) / s;
        c = 0.25 * s;
        d = (r[1][2] + r[2][1]) / s;
    } else {
        let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
        a = (r[1][0] - r[0][1]) / s;
        b = (r[0][2] + r[2][0]) / s;
        c = (r[1][2] + r[2][1]) / s;
        d = 0.25 * s;
    }
    // the stored quaternion has an implicit non-negative real part
    if a < 0.0 {
        b = -b;
        c = -c;
        d = -d;
    }
    ([b, c, d], qfac)
}

fn encode(volume: &Volume) -> Vec<u8> {
    let g = volume.geometry();
    let dtype = volume.dtype();
    let n = g.len();
    let nbytes = n * (dtype.bits() as usize / 8);
    let mut b = vec![0u8; VOX_OFFSET + nbytes];

    LE::write_i32(&mut b[0..4], HEADER_SIZE as i32);
    b[38] = b'r';
    let dim: [i16; 8] = [3, g.dims[0] as i16, g.dims[1] as i16, g.dims[2] as i16, 1, 1, 1, 1];
    for (k, d) in dim.iter().enumerate() {
        LE::write_i16(&mut b[40 + 2 * k..], *d);
    }
    LE::write_i16(&mut b[70..72], dtype.nifti_code());
    LE::write_i16(&mut b[72..74], dtype.bits());

    let (quat, qfac) = rotation_to_quaternion(&g.direction);
    let pixdim: [f32; 8] = [
        qfac as f32,
        g.spacing[0] as f32,
        g.spacing[1] as f32,
        g.spacing[2] as f32,
        0.0,
        0.0,
        0.0,
        0.0,
    ];
    for (k, p) in pixdim.iter().enumerate() {
        LE::write_f32(&mut b[76 + 4 * k..], *p);
    }
    LE::write_f32(&mut b[108..112], VOX_OFFSET as f32);
    LE::write_f32(&mut b[112..116], 1.0);
    LE::write_f32(&mut b[116..120], 0.0);
    b[123] = NIFTI_UNITS_MM;
    let descrip = b"subseg";
    b[148..148 + descrip.len()].copy_from_slice(descrip);

    LE::write_i16(&mut b[252..254], NIFTI_XFORM_SCANNER_ANAT);
    LE::write_i16(&mut b[254..256], NIFTI_XFORM_SCANNER_ANAT);
    for (k, q) in quat.iter().enumerate() {
        LE::write_f32(&mut b[256 + 4 * k..], *q as f32);
    }
    for k in 0..3 {
        LE::write_f32(&mut b[268 + 4 * k..], g.origin[k] as f32);
    }
    let affine = g.affine();
    for (r, row) in affine.iter().take(3).enumerate() {
        for (c, v) in row.iter().enumerate() {
            LE::write_f32(&mut b[280 + 16 * r + 4 * c..], *v as f32);
        }
    }
    b[344..348].copy_from_slice(b"n+1\0");

    let payload = &mut b[VOX_OFFSET..];
    match volume.data() {
        VoxelData::U8(v) => payload.copy_from_slice(v),
        VoxelData::I16(v) => LE::write_i16_into(v, payload),
        VoxelData::F32(v) => LE::write_f32_into(v, payload),
    }
    b
}
