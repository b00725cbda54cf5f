//! Versioned little-endian binary snapshots.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    b"BFKS"
//! version  u32
//! kind     u8      0 steady, 1 mode, 2 fourier, 3 bifpoint
//! problem  u32 length + UTF-8 bytes
//! dim      u64
//! params   u32 count, then per entry u32 length + UTF-8 name + f64 value
//! active   u32
//! meta     u32 count + f64 values (kind specific scalars)
//! mult     u64     payload multiplicity
//! payload  u64 length + f64 values, length = dim * mult
//! ```

use std::io::{Read, Write};
use std::path::Path;

use bifkit::bifurcation::{BifKind, BifPoint};
use bifkit::continuation::Tangent;
use bifkit::hb::FourierState;
use bifkit::problem::Parameters;
use num_complex::Complex64;

use crate::CliError;

const MAGIC: &[u8; 4] = b"BFKS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    Steady,
    Mode,
    Fourier,
    BifPoint,
}

impl SnapshotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SnapshotKind::Steady => "steady",
            SnapshotKind::Mode => "mode",
            SnapshotKind::Fourier => "fourier",
            SnapshotKind::BifPoint => "bifpoint",
        }
    }

    fn code(self) -> u8 {
        match self {
            SnapshotKind::Steady => 0,
            SnapshotKind::Mode => 1,
            SnapshotKind::Fourier => 2,
            SnapshotKind::BifPoint => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => SnapshotKind::Steady,
            1 => SnapshotKind::Mode,
            2 => SnapshotKind::Fourier,
            3 => SnapshotKind::BifPoint,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: SnapshotKind,
    pub problem: String,
    pub dim: usize,
    pub params: Parameters,
    pub meta: Vec<f64>,
    pub multiplicity: usize,
    pub payload: Vec<f64>,
}

fn incompatible(msg: impl Into<String>) -> CliError {
    CliError::Snapshot(msg.into())
}

fn interleave(v: &[Complex64]) -> impl Iterator<Item = f64> + '_ {
    v.iter().flat_map(|z| [z.re, z.im])
}

fn complex_block(x: &[f64]) -> Vec<Complex64> {
    x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn bif_code(kind: BifKind) -> f64 {
    match kind {
        BifKind::Fold => 0.0,
        BifKind::Pitchfork => 1.0,
        BifKind::Hopf => 2.0,
    }
}

impl Snapshot {
    /// Steady state, optionally with the continuation tangent (`y_alpha`
    /// stored in `meta`, `y_q` as a second payload block).
    pub fn steady(problem: &str, q: &[f64], params: &Parameters, tangent: Option<&Tangent>) -> Self {
        let mut payload = q.to_vec();
        let (meta, multiplicity) = match tangent {
            Some(t) => {
                payload.extend_from_slice(&t.y_q);
                (vec![t.y_alpha], 2)
            }
            None => (vec![], 1),
        };
        Self { kind: SnapshotKind::Steady, problem: problem.into(), dim: q.len(), params: params.clone(), meta, multiplicity, payload }
    }

    /// Complex mode stored as interleaved real/imaginary parts; `meta` holds
    /// the eigenvalue.
    pub fn mode(problem: &str, dim: usize, params: &Parameters, lambda: Complex64, blocks: &[Vec<Complex64>]) -> Self {
        let payload: Vec<f64> = blocks.iter().flat_map(|b| interleave(b).collect::<Vec<_>>()).collect();
        Self {
            kind: SnapshotKind::Mode,
            problem: problem.into(),
            dim,
            params: params.clone(),
            meta: vec![lambda.re, lambda.im],
            multiplicity: payload.len() / dim.max(1),
            payload,
        }
    }

    pub fn fourier(problem: &str, fs: &FourierState, params: &Parameters) -> Self {
        let mut payload = fs.mean.clone();
        for h in &fs.harmonics {
            payload.extend(interleave(h));
        }
        Self {
            kind: SnapshotKind::Fourier,
            problem: problem.into(),
            dim: fs.dim(),
            params: params.clone(),
            meta: vec![fs.order() as f64, fs.omega],
            multiplicity: 1 + 2 * fs.order(),
            payload,
        }
    }

    pub fn bifpoint(problem: &str, bif: &BifPoint) -> Self {
        let mut payload = bif.q.clone();
        payload.extend(interleave(&bif.direct_mode));
        payload.extend(interleave(&bif.adjoint_mode));
        Self {
            kind: SnapshotKind::BifPoint,
            problem: problem.into(),
            dim: bif.q.len(),
            params: bif.params.clone(),
            meta: vec![bif_code(bif.kind), bif.omega, bif.g_residual.re, bif.g_residual.im],
            multiplicity: 5,
            payload,
        }
    }

    pub fn expect_kind(&self, kind: SnapshotKind) -> Result<(), CliError> {
        if self.kind != kind {
            return Err(incompatible(format!("expected a {} snapshot, found {}", kind.as_str(), self.kind.as_str())));
        }
        Ok(())
    }

    /// Checks that the snapshot belongs to `problem` with state dimension `dim`.
    pub fn expect_problem(&self, problem: &str, dim: usize) -> Result<(), CliError> {
        if self.problem != problem || self.dim != dim {
            return Err(incompatible(format!(
                "snapshot is for {} (dim {}), configured problem is {} (dim {})",
                self.problem, self.dim, problem, dim
            )));
        }
        Ok(())
    }

    pub fn state(&self) -> Result<Vec<f64>, CliError> {
        self.expect_kind(SnapshotKind::Steady)?;
        Ok(self.payload[..self.dim].to_vec())
    }

    pub fn tangent(&self) -> Option<Tangent> {
        (self.kind == SnapshotKind::Steady && self.multiplicity == 2)
            .then(|| Tangent { y_q: self.payload[self.dim..].to_vec(), y_alpha: self.meta[0] })
    }

    pub fn fourier_state(&self) -> Result<FourierState, CliError> {
        self.expect_kind(SnapshotKind::Fourier)?;
        let n = self.dim;
        let order = self.meta[0] as usize;
        let harmonics = (0..order).map(|k| complex_block(&self.payload[n + 2 * n * k..n + 2 * n * (k + 1)])).collect();
        FourierState::new(self.payload[..n].to_vec(), harmonics, self.meta[1]).map_err(|e| incompatible(e.to_string()))
    }

    pub fn bif_point(&self) -> Result<BifPoint, CliError> {
        self.expect_kind(SnapshotKind::BifPoint)?;
        let n = self.dim;
        let kind = match self.meta[0] as i64 {
            0 => BifKind::Fold,
            1 => BifKind::Pitchfork,
            2 => BifKind::Hopf,
            c => return Err(incompatible(format!("unknown bifurcation code {c}"))),
        };
        Ok(BifPoint {
            kind,
            q: self.payload[..n].to_vec(),
            params: self.params.clone(),
            omega: self.meta[1],
            direct_mode: complex_block(&self.payload[n..3 * n]),
            adjoint_mode: complex_block(&self.payload[3 * n..5 * n]),
            g_residual: Complex64::new(self.meta[2], self.meta[3]),
            normal_form: None,
        })
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.payload.len() != self.dim * self.multiplicity {
            return Err(incompatible(format!(
                "payload length {} differs from dim {} x multiplicity {}",
                self.payload.len(),
                self.dim,
                self.multiplicity
            )));
        }
        let ok = match self.kind {
            SnapshotKind::Steady => {
                (self.multiplicity == 1 && self.meta.is_empty()) || (self.multiplicity == 2 && self.meta.len() == 1)
            }
            SnapshotKind::Mode => self.multiplicity % 2 == 0 && self.meta.len() == 2,
            SnapshotKind::Fourier => {
                self.meta.len() == 2 && self.meta[0] >= 0.0 && self.multiplicity == 1 + 2 * self.meta[0] as usize
            }
            SnapshotKind::BifPoint => self.multiplicity == 5 && self.meta.len() == 4,
        };
        if !ok {
            return Err(incompatible(format!("malformed {} snapshot header", self.kind.as_str())));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.payload.len());
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind.code());
        put_str(&mut out, &self.problem);
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, v) in self.params.names().iter().zip(self.params.values()) {
            put_str(&mut out, name);
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.active_index() as u32).to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        self.meta.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        out.extend_from_slice(&(self.multiplicity as u64).to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        self.payload.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(incompatible("not a snapshot file"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(incompatible(format!("unsupported snapshot version {version}")));
        }
        let kind = SnapshotKind::from_code(r.take(1)?[0]).ok_or_else(|| incompatible("unknown snapshot kind"))?;
        let problem = r.string()?;
        let dim = r.u64()? as usize;
        let np = r.u32()? as usize;
        let mut pairs = Vec::with_capacity(np);
        for _ in 0..np {
            let name = r.string()?;
            pairs.push((name, r.f64()?));
        }
        let active = r.u32()? as usize;
        let params = Parameters::new(pairs, active).map_err(|e| incompatible(e.to_string()))?;
        let nm = r.u32()? as usize;
        let meta = (0..nm).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let multiplicity = r.u64()? as usize;
        let len = r.u64()? as usize;
        if len > bytes.len() / 8 {
            return Err(incompatible("truncated payload"));
        }
        let payload = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        if r.pos != bytes.len() {
            return Err(incompatible("trailing bytes after payload"));
        }
        let snap = Self { kind, problem, dim, params, meta, multiplicity, payload };
        snap.validate()?;
        Ok(snap)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        self.validate()?;
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            CliError::Snapshot(m) => CliError::Snapshot(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| incompatible("truncated snapshot"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, CliError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| incompatible("invalid UTF-8 in snapshot"))
    }
}
