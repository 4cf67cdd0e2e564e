//! Binary and image file formats.
//!
//! * `DGHS1` groom: `"DGHS"`, u32 strand count, u32 vertices per strand, then
//!   little-endian f32 xyz triples, strand-major.
//! * `DGHV1` volume: 24-byte header (`"DGHV"`, u32 nx, ny, nz, channels,
//!   reserved), f32 origin xyz, f32 voxel size, then f32 data, channel-planar
//!   with x fastest.
//! * Images: binary PPM (`P6`, 8-bit) and 16-bit RGB PNG.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Point3;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::image::{to_u16, to_u8, Image};
use crate::strand::Groom;
use crate::volume::{FeatureVolume, GridSpec};

pub const GROOM_MAGIC: &[u8; 4] = b"DGHS";
pub const VOLUME_MAGIC: &[u8; 4] = b"DGHV";

struct Reader<'a> {
    buf: &'a [u8],
    format: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(CoreError::format(self.format, "unexpected end of data"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(CoreError::format(self.format, "bad magic"));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if !self.buf.is_empty() {
            return Err(CoreError::format(
                self.format,
                format!("{} trailing bytes", self.buf.len()),
            ));
        }
        Ok(())
    }
}

pub fn encode_groom(groom: &Groom) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + groom.point_count() * 12);
    out.extend_from_slice(GROOM_MAGIC);
    out.extend_from_slice(&(groom.strand_count() as u32).to_le_bytes());
    out.extend_from_slice(&(groom.vertices_per_strand() as u32).to_le_bytes());
    for p in groom.points() {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_groom(bytes: &[u8]) -> Result<Groom> {
    let mut r = Reader {
        buf: bytes,
        format: "DGHS1",
    };
    r.magic(GROOM_MAGIC)?;
    let strands = r.u32()? as usize;
    let vps = r.u32()? as usize;
    let mut points = Vec::with_capacity(strands * vps);
    for _ in 0..strands * vps {
        let x = r.f32()?;
        let y = r.f32()?;
        let z = r.f32()?;
        points.push(Point3::new(f64::from(x), f64::from(y), f64::from(z)));
    }
    r.finish()?;
    if strands == 0 {
        return Err(CoreError::Empty("groom file has no strands"));
    }
    Groom::from_points(vps, points)
}

/// Rounds every coordinate through f32, the precision stored on disk.
pub fn quantize_groom(groom: &Groom) -> Groom {
    let points = groom
        .points()
        .iter()
        .map(|p| p.map(|c| f64::from(c as f32)))
        .collect();
    groom
        .with_points(points)
        .expect("f32 rounding keeps a valid groom")
}

pub fn encode_volume(vol: &FeatureVolume) -> Vec<u8> {
    let spec = vol.spec();
    let mut out = Vec::with_capacity(40 + vol.data().len() * 4);
    out.extend_from_slice(VOLUME_MAGIC);
    for v in [
        spec.resolution[0],
        spec.resolution[1],
        spec.resolution[2],
        vol.channels(),
        0,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in spec.origin.iter().chain(std::iter::once(&spec.voxel_size)) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for v in vol.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<FeatureVolume> {
    let mut r = Reader {
        buf: bytes,
        format: "DGHV1",
    };
    r.magic(VOLUME_MAGIC)?;
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let nz = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let _reserved = r.u32()?;
    let origin = [
        f64::from(r.f32()?),
        f64::from(r.f32()?),
        f64::from(r.f32()?),
    ];
    let voxel_size = f64::from(r.f32()?);
    let spec = GridSpec::new([nx, ny, nz], origin, voxel_size)?;
    let count = spec
        .voxel_count()
        .checked_mul(channels)
        .ok_or_else(|| CoreError::format("DGHV1", "size overflow"))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(f64::from(r.f32()?));
    }
    r.finish()?;
    FeatureVolume::new(spec, channels, data)
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| to_u8(v)));
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CoreError::format("PPM", "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "P6" {
        return Err(CoreError::format("PPM", "only binary P6 is supported"));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| CoreError::format("PPM", format!("bad header field {s:?}")))
    };
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(CoreError::format("PPM", "only maxval 255 is supported"));
    }
    let raster = bytes
        .get(pos..)
        .filter(|r| r.len() == width * height * 3)
        .ok_or_else(|| CoreError::format("PPM", "raster size mismatch"))?;
    Image::new(
        width,
        height,
        raster.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )
}

pub fn write_png16(img: &Image, path: &Path) -> Result<()> {
    let samples: Vec<u16> = img.data.iter().map(|&v| to_u16(v)).collect();
    let buffer: image::ImageBuffer<image::Rgb<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(img.width as u32, img.height as u32, samples)
            .ok_or_else(|| CoreError::format("PNG", "buffer size mismatch"))?;
    buffer
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CoreError::format("PNG", e.to_string()))
}

pub fn read_png16(path: &Path) -> Result<Image> {
    let decoded = image::open(path).map_err(|e| CoreError::format("PNG", e.to_string()))?;
    let rgb = decoded.to_rgb16();
    let (w, h) = rgb.dimensions();
    Image::new(
        w as usize,
        h as usize,
        rgb.into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 65535.0)
            .collect(),
    )
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

pub fn write_groom(path: &Path, groom: &Groom) -> Result<()> {
    write_bytes(path, &encode_groom(groom))
}

pub fn read_groom(path: &Path) -> Result<Groom> {
    decode_groom(&read_bytes(path)?)
}

pub fn write_volume(path: &Path, vol: &FeatureVolume) -> Result<()> {
    write_bytes(path, &encode_volume(vol))
}

pub fn read_volume(path: &Path) -> Result<FeatureVolume> {
    decode_volume(&read_bytes(path)?)
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    write_bytes(path, &encode_ppm(img))
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    decode_ppm(&read_bytes(path)?)
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_bytes(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_groom() -> Groom {
        let pts = (0..12)
            .map(|i| {
                Point3::new(
                    0.01 * i as f64,
                    (i as f64 * 0.7).sin() * 0.1,
                    -0.02 * i as f64,
                )
            })
            .collect();
        Groom::from_points(6, pts).unwrap()
    }

    #[test]
    fn groom_header_layout() {
        let bytes = encode_groom(&toy_groom());
        assert_eq!(&bytes[..4], b"DGHS");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 6);
        assert_eq!(bytes.len(), 12 + 12 * 12);
    }

    #[test]
    fn groom_round_trip_is_bit_exact_after_quantization() {
        let g = quantize_groom(&toy_groom());
        let bytes = encode_groom(&g);
        let back = decode_groom(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(encode_groom(&back), bytes);
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let bytes = encode_groom(&toy_groom());
        assert!(decode_groom(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_groom(&bad).is_err());
    }

    #[test]
    fn volume_header_is_24_bytes_then_grid() {
        let spec = GridSpec::new([2, 3, 4], [0.5, -1.0, 0.25], 0.125).unwrap();
        let vol = FeatureVolume::new(spec, 2, (0..48).map(|i| i as f64 * 0.5).collect()).unwrap();
        let bytes = encode_volume(&vol);
        assert_eq!(&bytes[..4], b"DGHV");
        assert_eq!(bytes.len(), 24 + 16 + 48 * 4);
        assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), 0.5);
        let back = decode_volume(&bytes).unwrap();
        assert_eq!(back, vol);
        assert_eq!(encode_volume(&back), bytes);
    }

    #[test]
    fn ppm_round_trip() {
        let img = Image::new(3, 2, (0..18).map(|i| i as f64 / 17.0).collect())
            .unwrap()
            .quantized_u8();
        let bytes = encode_ppm(&img);
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        let back = decode_ppm(&bytes).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn png16_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::new(
            2,
            2,
            (0..12)
                .map(|i| f64::from(i as u16 * 4000) / 65535.0)
                .collect(),
        )
        .unwrap();
        write_png16(&img, &path).unwrap();
        assert_eq!(read_png16(&path).unwrap(), img);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_groom(Path::new("/nonexistent/dgh/file.dghs")).unwrap_err();
        assert!(matches!(err, CoreError::Io(_)));
    }

    proptest! {
        #[test]
        fn volume_bytes_round_trip(vals in prop::collection::vec(-10.0f32..10.0, 8)) {
            let spec = GridSpec::new([2, 2, 2], [0.0, 0.0, 0.0], 0.5).unwrap();
            let vol = FeatureVolume::new(spec, 1, vals.iter().map(|&v| f64::from(v)).collect()).unwrap();
            let bytes = encode_volume(&vol);
            prop_assert_eq!(encode_volume(&decode_volume(&bytes).unwrap()), bytes);
        }
    }
}
