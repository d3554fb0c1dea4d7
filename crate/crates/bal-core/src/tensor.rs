//! Dense row-major tensors and a small binary on-disk format.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A dense row-major tensor of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// A tensor of zeros with the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// Wrap existing data. The length must match the shape's element count.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::data(format!(
                "tensor shape {:?} wants {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reinterpret the same data under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::data(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                n
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Elementwise in-place `self += other`. Shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "shape mismatch in add_assign");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Multiply every element by a scalar.
    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    /// Copy out rows [start, end) along the first axis.
    pub fn slice_first(&self, start: usize, end: usize) -> Tensor {
        assert!(!self.shape.is_empty() && start <= end && end <= self.shape[0]);
        let stride: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor {
            shape,
            data: self.data[start * stride..end * stride].to_vec(),
        }
    }
}

const MAGIC: &[u8; 4] = b"BALT";
const VERSION: u16 = 1;
const DTYPE_F64: u8 = 1;

/// Write a tensor in the raw binary format:
/// magic `BALT`, u16 LE version, u8 dtype (1 = f64), u8 ndim,
/// ndim u32 LE dims, then the row-major f64 LE payload.
pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[DTYPE_F64, t.shape.len() as u8])?;
    for &d in &t.shape {
        let d = u32::try_from(d).map_err(|_| Error::data("tensor dimension exceeds u32"))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for &v in &t.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read one tensor written by [`write_tensor`].
pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::data("bad tensor magic"));
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != VERSION {
        return Err(Error::data(format!("unsupported tensor version {version}")));
    }
    let mut hdr = [0u8; 2];
    r.read_exact(&mut hdr)?;
    let [dtype, ndim] = hdr;
    if dtype != DTYPE_F64 {
        return Err(Error::data(format!("unsupported tensor dtype {dtype}")));
    }
    let mut shape = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = vec![0.0f64; n];
    let mut b = [0u8; 8];
    for v in &mut data {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(Tensor { shape, data })
}

/// Save a single tensor to a file.
pub fn save_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensor(&mut f, t)?;
    f.flush()?;
    Ok(())
}

/// Load a single tensor from a file.
pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_tensor(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::from_vec(&[2, 3], (0..6).map(|i| i as f64).collect()).unwrap();
        let r = t.reshape(&[3, 2]).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bt");
        let t = Tensor::from_vec(
            &[2, 2, 3],
            vec![
                0.0,
                -1.5,
                f64::MIN_POSITIVE,
                1e300,
                std::f64::consts::PI,
                -0.0,
                3.25,
                7.0,
                -2.75,
                1.0,
                2.0,
                4.5,
            ],
        )
        .unwrap();
        save_tensor(&path, &t).unwrap();
        let u = load_tensor(&path).unwrap();
        assert_eq!(u.shape(), t.shape());
        for (a, b) in t.data().iter().zip(u.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = Vec::new();
        write_tensor(&mut bytes, &Tensor::zeros(&[2])).unwrap();
        bytes[0] = b'X';
        assert!(read_tensor(&mut &bytes[..]).is_err());
    }
}
