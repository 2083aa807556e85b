//! Reader and writer for version 1.0 `.npy` files holding little-endian
//! `f8` / `f4` C-ordered arrays.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

/// Reads just the header of an `.npy` file.
pub fn read_header(path: impl AsRef<Path>) -> Result<Header> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_header(&mut BufReader::new(f)).map_err(|e| e.in_file(path))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    read_tensor(&mut BufReader::new(f)).map_err(|e| e.in_file(path))
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::from(e).in_file(path))?;
    let mut w = BufWriter::new(f);
    write_to(t, &mut w)
        .and_then(|_| w.flush().map_err(Error::from))
        .map_err(|e| e.in_file(path))
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let header = parse_header(r)?;
    let len: usize = header.shape.iter().product();
    let mut payload = Vec::with_capacity(len * header.dtype.width());
    r.read_to_end(&mut payload)?;
    if payload.len() != len * header.dtype.width() {
        return Err(Error::Npy(format!(
            "payload holds {} bytes, shape {:?} needs {}",
            payload.len(),
            header.shape,
            len * header.dtype.width()
        )));
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Tensor::new(header.shape, data)
}

/// Serializes `t` as `<f8`, padding the header so the payload starts on a
/// 64-byte boundary.
pub fn write_to<W: Write>(t: &Tensor, w: &mut W) -> Result<()> {
    let shape = match t.shape() {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape}, }}");
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let padded = unpadded.div_ceil(ALIGN) * ALIGN;
    dict.extend(std::iter::repeat_n(' ', padded - unpadded));
    dict.push('\n');
    let header_len = u16::try_from(dict.len()).map_err(|_| Error::Npy("header longer than 65535 bytes".into()))?;

    w.write_all(MAGIC)?;
    w.write_all(&[1, 0])?;
    w.write_all(&header_len.to_le_bytes())?;
    w.write_all(dict.as_bytes())?;
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn parse_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut pre = [0u8; 10];
    r.read_exact(&mut pre)
        .map_err(|_| Error::Npy("file shorter than the NPY preamble".into()))?;
    if &pre[..6] != MAGIC {
        return Err(Error::Npy("bad magic string".into()));
    }
    if pre[6..8] != [1, 0] {
        return Err(Error::Npy(format!("unsupported format version {}.{}", pre[6], pre[7])));
    }
    let header_len = u16::from_le_bytes([pre[8], pre[9]]) as usize;
    let mut raw = vec![0u8; header_len];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Npy("truncated header".into()))?;
    let text = std::str::from_utf8(&raw).map_err(|_| Error::Npy("header is not ASCII".into()))?;
    parse_dict(text)
}

fn parse_dict(text: &str) -> Result<Header> {
    let body = text
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| Error::Npy("header is not a dict literal".into()))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest)?;
        let after = after
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| Error::Npy(format!("missing ':' after key {key:?}")))?
            .trim_start();
        let after = match key {
            "descr" => {
                let (v, a) = take_quoted(after)?;
                descr = Some(v.to_string());
                a
            }
            "fortran_order" => {
                if let Some(a) = after.strip_prefix("False") {
                    fortran = Some(false);
                    a
                } else if let Some(a) = after.strip_prefix("True") {
                    fortran = Some(true);
                    a
                } else {
                    return Err(Error::Npy("fortran_order must be True or False".into()));
                }
            }
            "shape" => {
                let (v, a) = take_tuple(after)?;
                shape = Some(v);
                a
            }
            other => return Err(Error::Npy(format!("unexpected header key {other:?}"))),
        };
        let after = after.trim_start();
        rest = match after.strip_prefix(',') {
            Some(a) => a.trim_start(),
            None if after.is_empty() => after,
            None => return Err(Error::Npy("expected ',' between header entries".into())),
        };
    }

    let descr = descr.ok_or_else(|| Error::Npy("header lacks 'descr'".into()))?;
    let fortran = fortran.ok_or_else(|| Error::Npy("header lacks 'fortran_order'".into()))?;
    let shape = shape.ok_or_else(|| Error::Npy("header lacks 'shape'".into()))?;
    if fortran {
        return Err(Error::FortranOrder);
    }
    let dtype = match descr.as_str() {
        "<f8" => Dtype::F8,
        "<f4" => Dtype::F4,
        _ => return Err(Error::Dtype(descr)),
    };
    if shape.is_empty() {
        return Err(Error::Shape("0-d arrays are not supported".into()));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero-length axis in {shape:?}")));
    }
    Ok(Header { dtype, shape })
}

fn take_quoted(s: &str) -> Result<(&str, &str)> {
    let quote = s
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| Error::Npy(format!("expected a quoted string at {s:?}")))?;
    let inner = &s[1..];
    let end = inner
        .find(quote)
        .ok_or_else(|| Error::Npy("unterminated string".into()))?;
    Ok((&inner[..end], &inner[end + 1..]))
}

fn take_tuple(s: &str) -> Result<(Vec<usize>, &str)> {
    let inner = s
        .strip_prefix('(')
        .ok_or_else(|| Error::Npy("shape must be a tuple".into()))?;
    let end = inner
        .find(')')
        .ok_or_else(|| Error::Npy("unterminated shape tuple".into()))?;
    let dims = inner[..end]
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Npy(format!("bad shape entry {p:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dims, &inner[end + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_npy(dict: &str, payload: &[u8]) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    fn f8_bytes(v: &[f64]) -> Vec<u8> {
        v.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    #[test]
    fn reads_small_matrix() {
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }\n",
            &f8_bytes(&[1.0, 2.0, 3.0, 4.0]),
        );
        let t = read_tensor(&mut bytes.as_slice()).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn widens_f4() {
        let payload: Vec<u8> = [0.5f32, -1.25].iter().flat_map(|x| x.to_le_bytes()).collect();
        let bytes = raw_npy("{'descr': '<f4', 'fortran_order': False, 'shape': (2,), }\n", &payload);
        let t = read_tensor(&mut bytes.as_slice()).unwrap();
        assert_eq!(t.data(), &[0.5, -1.25]);
    }

    #[test]
    fn rejects_fortran_order() {
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': True, 'shape': (2, 2), }\n",
            &f8_bytes(&[1.0, 2.0, 3.0, 4.0]),
        );
        let err = read_tensor(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, Error::FortranOrder));
        assert!(err.to_string().contains("unsupported layout"));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cases: Vec<Vec<u8>> = vec![
            b"\x93NUMPX\x01\x00".to_vec(),
            raw_npy(
                "{'descr': '>f8', 'fortran_order': False, 'shape': (1,), }",
                &f8_bytes(&[1.0]),
            ),
            raw_npy(
                "{'descr': '<i8', 'fortran_order': False, 'shape': (1,), }",
                &f8_bytes(&[1.0]),
            ),
            raw_npy(
                "{'descr': '<f8', 'fortran_order': False, 'shape': (), }",
                &f8_bytes(&[1.0]),
            ),
            raw_npy(
                "{'descr': '<f8', 'fortran_order': False, 'shape': (2,), }",
                &f8_bytes(&[1.0]),
            ),
            raw_npy(
                "{'descr': '<f8', 'fortran_order': False, 'shape': (1,), }",
                &f8_bytes(&[f64::NAN]),
            ),
            raw_npy("{'descr': '<f8', 'shape': (1,), }", &f8_bytes(&[1.0])),
        ];
        for bytes in cases {
            assert!(read_tensor(&mut bytes.as_slice()).is_err());
        }
        let mut v2 = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (1,), }",
            &f8_bytes(&[1.0]),
        );
        v2[6] = 2;
        assert!(read_tensor(&mut v2.as_slice()).is_err());
    }

    #[test]
    fn minimal_tensor_layout() {
        let t = Tensor::new(vec![1], vec![0.0]).unwrap();
        let mut buf = Vec::new();
        write_to(&t, &mut buf).unwrap();
        assert_eq!(buf.len(), 128 + 8);
        assert_eq!(&buf[..8], b"\x93NUMPY\x01\x00");
        assert_eq!(buf[127], b'\n');
        assert_eq!(&buf[128..], &[0u8; 8]);
        let header = std::str::from_utf8(&buf[10..128]).unwrap();
        assert!(header.starts_with("{'descr': '<f8', 'fortran_order': False, 'shape': (1,), }"));
    }

    #[test]
    fn header_only_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.npy");
        write_tensor(&Tensor::zeros(vec![3, 2, 5]).unwrap(), &p).unwrap();
        let h = read_header(&p).unwrap();
        assert_eq!(h.shape, vec![3, 2, 5]);
        assert_eq!(h.dtype, Dtype::F8);
    }
}
