//! Frame ingestion: 8-bit binary PGM (P5) / PPM (P6) images and `FRMS`
//! raw tensor files.

use std::path::{Path, PathBuf};

use super::Frame;
use crate::binio::{self, Reader};
use crate::error::{Error, Result};

const FRMS_MAGIC: &[u8] = b"FRMS";

pub fn encode_frms(frames: &[Frame]) -> Result<Vec<u8>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("cannot write an empty frame sequence"))?;
    if frames.iter().any(|f| !f.same_shape(first)) {
        return Err(Error::invalid(
            "all frames in a FRMS file must share one shape",
        ));
    }
    let mut out = Vec::with_capacity(20 + frames.len() * first.data().len() * 4);
    out.extend_from_slice(FRMS_MAGIC);
    for v in [
        frames.len(),
        first.height(),
        first.width(),
        first.channels(),
    ] {
        binio::put_u32(&mut out, v as u32);
    }
    for f in frames {
        binio::put_f32s(&mut out, f.data().iter().copied());
    }
    Ok(out)
}

pub fn decode_frms(bytes: &[u8]) -> Result<Vec<Frame>> {
    let mut rd = Reader::new(bytes);
    rd.expect_magic(FRMS_MAGIC, "frms header")?;
    let n = rd.u32("frms header")? as usize;
    let h = rd.u32("frms header")? as usize;
    let w = rd.u32("frms header")? as usize;
    let c = rd.u32("frms header")? as usize;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let at = rd.offset();
        let data = rd.f32_vec(h * w * c, &format!("frms frame {i}"))?;
        frames.push(
            Frame::new(h, w, c, data)
                .map_err(|e| Error::format(format!("frms frame {i}"), at, e.to_string()))?,
        );
    }
    rd.finish("frms trailer")?;
    Ok(frames)
}

/// Reads only the frame count from a `FRMS` header.
pub fn frms_len(path: &Path) -> Result<usize> {
    use std::io::Read;
    let mut head = [0u8; 8];
    std::fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .map_err(|e| Error::io(path, e))?;
    let mut rd = Reader::new(&head);
    rd.expect_magic(FRMS_MAGIC, "frms header")?;
    Ok(rd.u32("frms header")? as usize)
}

fn pnm_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Decodes an 8-bit P5/P6 image into `[0, 1]`.
pub fn decode_pnm(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0;
    let bad = |pos: usize, msg: &str| Error::format("pnm header", pos as u64, msg);
    let magic = pnm_token(bytes, &mut pos).ok_or_else(|| bad(0, "empty file"))?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        _ => return Err(bad(0, "expected P5 or P6")),
    };
    let mut num = |name: &str| -> Result<usize> {
        pnm_token(bytes, &mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(pos, &format!("bad {name}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(bad(pos, "only 8-bit images are supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height * channels;
    if bytes.len() < pos + need {
        return Err(Error::format("pnm raster", pos as u64, "truncated raster"));
    }
    let data = bytes[pos..pos + need]
        .iter()
        .map(|&b| b as f32 / maxval as f32)
        .collect();
    Frame::new(height, width, channels, data)
}

/// Encodes a frame as P5/P6, rounding to 8 bits.
pub fn encode_pnm(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(
        frame
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("pgm" | "ppm")
    )
}

fn is_frms(p: &Path) -> bool {
    p.extension().and_then(|e| e.to_str()) == Some("frms")
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads one video: a `.frms` file, a single image, or a directory of images
/// in file-name order.
pub fn load_video(path: &Path) -> Result<Vec<Frame>> {
    if path.is_dir() {
        let frames = sorted_entries(path)?
            .into_iter()
            .filter(|p| is_image(p))
            .map(|p| decode_pnm(&binio::read_file(&p)?))
            .collect::<Result<Vec<_>>>()?;
        if frames.is_empty() {
            return Err(Error::invalid(format!(
                "{} contains no PGM/PPM frames",
                path.display()
            )));
        }
        Ok(frames)
    } else if is_frms(path) {
        decode_frms(&binio::read_file(path)?)
    } else {
        Ok(vec![decode_pnm(&binio::read_file(path)?)?])
    }
}

/// Video entries of a dataset directory: `<id>.frms` files or `<id>/` image
/// directories, sorted by id.
pub fn list_videos(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for p in sorted_entries(root)? {
        let stem = p
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        if p.is_dir() || is_frms(&p) {
            out.push((stem, p));
        }
    }
    if out.is_empty() {
        return Err(Error::invalid(format!(
            "no videos found under {}",
            root.display()
        )));
    }
    Ok(out)
}

/// Number of frames of a dataset entry without decoding pixel data where possible.
pub fn video_len(path: &Path) -> Result<usize> {
    if is_frms(path) {
        frms_len(path)
    } else {
        Ok(sorted_entries(path)?
            .into_iter()
            .filter(|p| is_image(p))
            .count())
    }
}

pub fn save_frms(path: &Path, frames: &[Frame]) -> Result<()> {
    binio::write_file(path, &encode_frms(frames)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frms_round_trip_and_truncation() {
        let frames: Vec<Frame> = (0..3)
            .map(|i| Frame::filled(2, 3, 3, i as f32 * 0.25).unwrap())
            .collect();
        let bytes = encode_frms(&frames).unwrap();
        assert_eq!(bytes.len(), 20 + 3 * 18 * 4);
        assert_eq!(decode_frms(&bytes).unwrap(), frames);
        let err = decode_frms(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(matches!(err, Error::Format { ref section, .. } if section == "frms frame 2"));
    }

    #[test]
    fn pnm_round_trip_with_comment() {
        let bytes = b"P5\n# comment\n3 2\n255\n\x00\x80\xff\x10\x20\x30".to_vec();
        let f = decode_pnm(&bytes).unwrap();
        assert_eq!((f.height(), f.width(), f.channels()), (2, 3, 1));
        assert_eq!(f.get(0, 2, 0), 1.0);
        assert_eq!(decode_pnm(&encode_pnm(&f)).unwrap(), f);

        let color = Frame::new(1, 2, 3, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        let back = decode_pnm(&encode_pnm(&color)).unwrap();
        assert_eq!(back.channels(), 3);
        assert!(back
            .data()
            .iter()
            .zip(color.data())
            .all(|(a, b)| (a - b).abs() < 0.5 / 255.0 + 1e-6));
        assert!(decode_pnm(b"P5\n3 2\n255\n\x00").is_err());
        assert!(decode_pnm(b"P3\n1 1\n255\n0").is_err());
    }

    #[test]
    fn dataset_listing() {
        let dir = tempfile::tempdir().unwrap();
        let f = Frame::filled(4, 4, 1, 0.5).unwrap();
        save_frms(&dir.path().join("b.frms"), &[f.clone(), f.clone()]).unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        for i in 0..3 {
            std::fs::write(
                dir.path().join("a").join(format!("{i:03}.pgm")),
                encode_pnm(&f),
            )
            .unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let vids = list_videos(dir.path()).unwrap();
        assert_eq!(
            vids.iter().map(|v| v.0.as_str()).collect::<Vec<_>>(),
            ["a", "b"]
        );
        assert_eq!(load_video(&vids[0].1).unwrap().len(), 3);
        assert_eq!(video_len(&vids[0].1).unwrap(), 3);
        assert_eq!(video_len(&vids[1].1).unwrap(), 2);
        assert_eq!(load_video(&vids[1].1).unwrap().len(), 2);
    }
}
