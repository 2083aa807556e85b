use std::path::Path;

use crate::error::CliError;

/// Binary PGM bytes for a row-major map with values in [0, 1].
pub fn pgm(values: &[f64], height: usize, width: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    // f64::round rounds half away from zero
    out.extend(values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Writes `{dir}/{index:04}.pgm` for every map of `[n, h, w]` data.
pub fn write_all(dir: &Path, maps: &[f64], n: usize, height: usize, width: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })?;
    let size = height * width;
    for i in 0..n {
        let path = dir.join(format!("{i:04}.pgm"));
        std::fs::write(&path, pgm(&maps[i * size..(i + 1) * size], height, width))
            .map_err(|source| CliError::Output { path, source })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization() {
        let bytes = pgm(&[0.0, 1.0, 0.5, 1.0 / 255.0 * 0.5, 0.2], 1, 5);
        assert_eq!(&bytes[..11], b"P5\n5 1\n255\n");
        // 127.5 and 0.5 round away from zero
        assert_eq!(&bytes[11..], &[0, 255, 128, 1, 51]);
    }
}
