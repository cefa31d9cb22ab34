//! Binary spectrum container.
//!
//! Layout (little endian):
//!
//! | field        | type      |
//! |--------------|-----------|
//! | magic        | `DKSPEC01` |
//! | version      | u32       |
//! | omega, omega0, gamma | f64 ×3 |
//! | two_j        | u32       |
//! | basis tag    | u8 (0 Fock, 1 efficient) |
//! | reserved     | u8, u16   |
//! | n_max        | u64       |
//! | dim          | u64       |
//! | n_states     | u64       |
//! | eigenvalues  | f64 × n_states |
//! | converged    | u8 × n_states  |
//! | eigenvectors | f64 × dim × n_states, column-major |
//!
//! A JSON sidecar with the same stem carries human-readable metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use super::{BasisTag, ModelParams, Spectrum};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DKSPEC01";
const VERSION: u32 = 1;

/// Metadata written next to a binary spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    pub format_version: u32,
    pub params: ModelParams,
    pub basis: BasisTag,
    pub dim: usize,
    pub n_states: usize,
    pub converged: usize,
    pub epsilon_min: Option<f64>,
    pub epsilon_max: Option<f64>,
}

pub(crate) fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

impl Spectrum {
    pub fn sidecar(&self) -> SpectrumSidecar {
        let eps = self.scaled_energies();
        SpectrumSidecar {
            format_version: VERSION,
            params: self.params,
            basis: self.basis,
            dim: self.dim(),
            n_states: self.len(),
            converged: self.converged_count(),
            epsilon_min: eps.first().copied(),
            epsilon_max: eps.last().copied(),
        }
    }

    /// Writes the binary container at `path` and its sidecar at `path.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_f64::<LittleEndian>(self.params.omega)?;
        w.write_f64::<LittleEndian>(self.params.omega0)?;
        w.write_f64::<LittleEndian>(self.params.gamma)?;
        w.write_u32::<LittleEndian>(self.params.two_j())?;
        let tag = match self.basis {
            BasisTag::Fock { .. } => 0u8,
            BasisTag::Efficient { .. } => 1u8,
        };
        w.write_u8(tag)?;
        w.write_u8(0)?;
        w.write_u16::<LittleEndian>(0)?;
        w.write_u64::<LittleEndian>(self.basis.n_max() as u64)?;
        w.write_u64::<LittleEndian>(self.dim() as u64)?;
        w.write_u64::<LittleEndian>(self.len() as u64)?;
        for &e in &self.eigenvalues {
            w.write_f64::<LittleEndian>(e)?;
        }
        for &c in &self.converged {
            w.write_u8(c as u8)?;
        }
        for k in 0..self.len() {
            for &x in self.eigenvector(k).iter() {
                w.write_f64::<LittleEndian>(x)?;
            }
        }
        w.flush()?;
        let side = File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(side, &self.sidecar())?;
        Ok(())
    }

    /// Reads a container written by [`save`](Self::save). The sidecar is
    /// optional; if present it must agree with the binary header.
    pub fn load(path: &Path) -> Result<Spectrum> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let omega = r.read_f64::<LittleEndian>()?;
        let omega0 = r.read_f64::<LittleEndian>()?;
        let gamma = r.read_f64::<LittleEndian>()?;
        let two_j = r.read_u32::<LittleEndian>()?;
        let params = ModelParams::new(omega, omega0, gamma, two_j as f64 / 2.0)?;
        let tag = r.read_u8()?;
        r.read_u8()?;
        r.read_u16::<LittleEndian>()?;
        let n_max = r.read_u64::<LittleEndian>()? as usize;
        let basis = match tag {
            0 => BasisTag::Fock { n_max },
            1 => BasisTag::Efficient { n_max },
            t => return Err(Error::Format(format!("unknown basis tag {t}"))),
        };
        let dim = r.read_u64::<LittleEndian>()? as usize;
        let n_states = r.read_u64::<LittleEndian>()? as usize;
        if dim != basis.dim(&params) || n_states > dim {
            return Err(Error::Format(format!(
                "inconsistent sizes: dim {dim}, states {n_states}, expected dim {}",
                basis.dim(&params)
            )));
        }
        let mut eigenvalues = vec![0.0; n_states];
        r.read_f64_into::<LittleEndian>(&mut eigenvalues)?;
        let mut flags = vec![0u8; n_states];
        r.read_exact(&mut flags)?;
        let mut data = vec![0.0; dim * n_states];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", rest.len())));
        }
        let eigenvectors = Array2::from_shape_vec((dim, n_states).f(), data)
            .map_err(|e| Error::Format(e.to_string()))?;
        let spectrum = Spectrum {
            params,
            basis,
            eigenvalues,
            eigenvectors,
            converged: flags.into_iter().map(|b| b != 0).collect(),
        };
        let side = sidecar_path(path);
        if side.exists() {
            let meta: SpectrumSidecar = serde_json::from_reader(BufReader::new(File::open(side)?))?;
            if meta.params != spectrum.params || meta.basis != spectrum.basis || meta.n_states != n_states {
                return Err(Error::Format("sidecar disagrees with binary header".into()));
            }
        }
        Ok(spectrum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solve, SolveOptions};

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let p = ModelParams::new(1.0, 0.8, 0.9, 1.5).unwrap();
        let s = solve(&p, BasisTag::Fock { n_max: 12 }, &SolveOptions::default()).unwrap();
        s.save(&path).unwrap();
        let back = Spectrum::load(&path).unwrap();
        assert_eq!(back.params, s.params);
        assert_eq!(back.basis, s.basis);
        assert_eq!(back.eigenvalues, s.eigenvalues);
        assert_eq!(back.converged, s.converged);
        assert_eq!(back.eigenvectors, s.eigenvectors);
        let meta: SpectrumSidecar =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
        assert_eq!(meta.dim, 52);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOTASPECTRUM").unwrap();
        assert!(matches!(Spectrum::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let p = ModelParams::resonant(1.0).unwrap();
        let s = solve(&p, BasisTag::Efficient { n_max: 5 }, &SolveOptions::default()).unwrap();
        s.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(Spectrum::load(&path).is_err());
    }
}
