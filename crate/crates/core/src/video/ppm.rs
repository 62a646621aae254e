//! Binary P6 frames, maxval 255.

use std::fs;
use std::path::{Path, PathBuf};

use super::Clip;
use crate::error::{Error, Result};

/// Encodes one planar `3×H×W` frame as P6 (`"P6\n{w} {h}\n255\n"` + RGB bytes).
pub fn encode_ppm(planar: &[u8], h: usize, w: usize) -> Vec<u8> {
    let n = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * n);
    for i in 0..n {
        out.extend_from_slice(&[planar[i], planar[n + i], planar[2 * n + i]]);
    }
    out
}

/// Decodes a P6 image into planar `3×H×W` bytes.
pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::format(path, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P6" {
        return Err(Error::format(path, format!("not a binary PPM (magic {magic:?})")));
    }
    let mut num = |what: &str| -> Result<usize> {
        let t = token()?;
        t.parse().map_err(|_| Error::format(path, format!("bad {what} {t:?}")))
    };
    let w = num("width")?;
    let h = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(Error::format(path, format!("maxval {maxval} unsupported (need 255)")));
    }
    if w == 0 || h == 0 {
        return Err(Error::format(path, "zero extent"));
    }
    // exactly one whitespace byte separates header and raster
    let start = pos + 1;
    let n = h * w;
    let raster = bytes
        .get(start..start + 3 * n)
        .ok_or_else(|| Error::format(path, format!("truncated raster: need {} bytes", 3 * n)))?;
    let mut planar = vec![0u8; 3 * n];
    for (i, px) in raster.chunks_exact(3).enumerate() {
        planar[i] = px[0];
        planar[n + i] = px[1];
        planar[2 * n + i] = px[2];
    }
    Ok((h, w, planar))
}

fn ppm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every `.ppm` in `dir`; lexicographic file-name order is time order.
pub fn read_ppm_sequence(dir: &Path) -> Result<Clip> {
    let files = ppm_files(dir)?;
    if files.is_empty() {
        return Err(Error::format(dir, "no .ppm frames"));
    }
    let mut dims = None;
    let mut bytes = Vec::new();
    for f in &files {
        let raw = fs::read(f).map_err(|e| Error::io(f, e))?;
        let (h, w, planar) = decode_ppm(&raw, f)?;
        match dims {
            None => dims = Some((h, w)),
            Some(d) if d != (h, w) => {
                return Err(Error::format(
                    f,
                    format!("resolution {w}x{h} differs from first frame {}x{}", d.1, d.0),
                ))
            }
            _ => {}
        }
        bytes.extend_from_slice(&planar);
    }
    let (h, w) = dims.unwrap();
    Ok(Clip::new(files.len(), h, w, bytes)?.with_source(dir.display().to_string()))
}

/// Writes `frame_000000.ppm`, `frame_000001.ppm`, … into `dir` (created if missing).
pub fn write_ppm_sequence(clip: &Clip, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in 0..clip.len() {
        let path = dir.join(format!("frame_{t:06}.ppm"));
        fs::write(&path, encode_ppm(clip.frame(t), clip.height(), clip.width())).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::ParamRng;

    #[test]
    fn decodes_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut file = b"P6\n2 2\n255\n".to_vec();
        let rgb: Vec<u8> = (1..=12).collect();
        file.extend_from_slice(&rgb);
        fs::write(dir.path().join("a.ppm"), &file).unwrap();
        let clip = read_ppm_sequence(dir.path()).unwrap();
        assert_eq!((clip.len(), clip.height(), clip.width()), (1, 2, 2));
        assert_eq!(clip.frame(0), &[1, 4, 7, 10, 2, 5, 8, 11, 3, 6, 9, 12]);
    }

    #[test]
    fn header_comments_skipped() {
        let mut file = b"P6 # comment\n1 1\n# another\n255\n".to_vec();
        file.extend_from_slice(&[9, 8, 7]);
        let (h, w, px) = decode_ppm(&file, Path::new("x.ppm")).unwrap();
        assert_eq!((h, w, px), (1, 1, vec![9, 8, 7]));
    }

    #[test]
    fn empty_directory_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_ppm_sequence(dir.path()).is_err());
    }

    #[test]
    fn errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.ppm"), encode_ppm(&[0; 3], 1, 1)).unwrap();
        fs::write(dir.path().join("b.ppm"), encode_ppm(&[0; 12], 2, 2)).unwrap();
        let err = read_ppm_sequence(dir.path()).unwrap_err().to_string();
        assert!(err.contains("b.ppm"), "{err}");

        fs::remove_file(dir.path().join("b.ppm")).unwrap();
        fs::write(dir.path().join("c.ppm"), b"P6\n1 1\n65535\n\0\0\0\0\0\0").unwrap();
        let err = read_ppm_sequence(dir.path()).unwrap_err().to_string();
        assert!(err.contains("c.ppm") && err.contains("maxval"), "{err}");

        fs::write(dir.path().join("c.ppm"), b"P6\n2 2\n255\n\x01\x02").unwrap();
        let err = read_ppm_sequence(dir.path()).unwrap_err().to_string();
        assert!(err.contains("c.ppm") && err.contains("truncated"), "{err}");
    }

    #[test]
    fn sequence_round_trip_is_bitwise() {
        let mut rng = ParamRng::new(4);
        let (t, h, w) = (3, 5, 4);
        let bytes = (0..t * 3 * h * w).map(|_| rng.byte()).collect();
        let clip = Clip::new(t, h, w, bytes).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_ppm_sequence(&clip, a.path()).unwrap();
        let back = read_ppm_sequence(a.path()).unwrap();
        assert_eq!(back.bytes(), clip.bytes());
        write_ppm_sequence(&back, b.path()).unwrap();
        for i in 0..t {
            let name = format!("frame_{i:06}.ppm");
            assert_eq!(
                fs::read(a.path().join(&name)).unwrap(),
                fs::read(b.path().join(&name)).unwrap()
            );
        }
    }
}
