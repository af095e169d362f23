//! Offline store of intertwiner bases keyed by `(in-capsule, out-capsule, s)`.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;

use super::{intertwining_number, project_equivariant, IntertwinerBasis};
use crate::capsules::capsule;
use crate::error::{Error, Result};
use crate::induction::build_patch_rep;
use crate::rep::Representation;
use crate::tensor::{read_bundle, write_bundle, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisKey {
    pub in_capsule: String,
    pub out_capsule: String,
    pub size: usize,
}

impl BasisKey {
    pub fn new(in_capsule: &str, out_capsule: &str, size: usize) -> Self {
        BasisKey {
            in_capsule: in_capsule.to_string(),
            out_capsule: out_capsule.to_string(),
            size,
        }
    }

    /// Record name in the cache file: `in|out|s`.
    pub fn record_name(&self) -> String {
        format!("{}|{}|{}", self.in_capsule, self.out_capsule, self.size)
    }

    pub fn parse_record_name(name: &str) -> Result<Self> {
        let parts: Vec<&str> = name.split('|').collect();
        match parts.as_slice() {
            [a, b, s] => Ok(BasisKey::new(
                a,
                b,
                s.parse()
                    .map_err(|_| Error::Parse(format!("bad patch size in record '{name}'")))?,
            )),
            _ => Err(Error::Parse(format!("bad basis record name '{name}'"))),
        }
    }
}

/// Bases for `Hom_H(π_in, ρ_out)`, where `π_in` is the patch representation
/// of the input capsule and `ρ_out` the output capsule's representation.
///
/// Each basis is kept next to the 32-bit columns it was rebuilt from, which
/// are what the cache file stores.
///
/// Concurrent readers share the map; insertion takes the write lock.
#[derive(Debug, Default)]
pub struct BasisCatalog {
    bases: RwLock<HashMap<BasisKey, (Arc<IntertwinerBasis>, Tensor)>>,
}

impl BasisCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide catalogue.
    pub fn global() -> &'static BasisCatalog {
        static GLOBAL: OnceLock<BasisCatalog> = OnceLock::new();
        GLOBAL.get_or_init(BasisCatalog::new)
    }

    pub fn len(&self) -> usize {
        self.bases.read().expect("catalog lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &BasisKey) -> bool {
        self.bases.read().expect("catalog lock").contains_key(key)
    }

    pub fn get(&self, in_capsule: &str, out_capsule: &str, size: usize) -> Result<Arc<IntertwinerBasis>> {
        let key = BasisKey::new(in_capsule, out_capsule, size);
        if let Some((b, _)) = self.bases.read().expect("catalog lock").get(&key) {
            return Ok(b.clone());
        }
        let pi = build_patch_rep(&capsule(in_capsule)?.rep, size)?;
        let rho = capsule(out_capsule)?.rep.clone();
        let cols = super::hom_basis(pi.rep(), &rho)?.as_columns();
        let data: Vec<f64> = (0..cols.nrows())
            .flat_map(|i| cols.row(i).iter().copied().collect::<Vec<_>>())
            .collect();
        let stored = Tensor::from_f64(vec![cols.nrows(), cols.ncols()], &data)?;
        let basis = Arc::new(canonicalize(&key.record_name(), &stored, pi.rep(), &rho)?);
        let mut w = self.bases.write().expect("catalog lock");
        Ok(w.entry(key).or_insert((basis, stored)).0.clone())
    }

    /// Writes every cached basis as a named-tensor bundle. The file is held
    /// under an exclusive advisory lock while writing.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut records: Vec<(BasisKey, Tensor)> = self
            .bases
            .read()
            .expect("catalog lock")
            .iter()
            .map(|(k, (_, t))| (k.clone(), t.clone()))
            .collect();
        records.sort_by(|a, b| a.0.cmp(&b.0));
        let tensors: Vec<(String, Tensor)> = records
            .into_iter()
            .map(|(k, t)| (k.record_name(), t))
            .collect();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(path)?;
        file.lock()?;
        file.set_len(0)?;
        let mut w = BufWriter::new(&file);
        w.seek(SeekFrom::Start(0))?;
        write_bundle(&mut w, &tensors)?;
        w.flush()?;
        drop(w);
        file.unlock()?;
        Ok(())
    }

    /// Merges bases from a cache file; each record's dimension must match
    /// the character formula.
    pub fn load(&self, path: &Path) -> Result<usize> {
        let file = OpenOptions::new().read(true).open(path)?;
        file.lock_shared()?;
        let records = read_bundle(&mut BufReader::new(&file))?;
        file.unlock()?;
        let mut loaded = 0;
        for (name, tensor) in records {
            let key = BasisKey::parse_record_name(&name)?;
            let pi = build_patch_rep(&capsule(&key.in_capsule)?.rep, key.size)?;
            let rho = capsule(&key.out_capsule)?.rep.clone();
            let expected = intertwining_number(pi.rep(), &rho)?;
            let rows = pi.dim() * rho.dim();
            if tensor.dims != [rows, expected] {
                return Err(Error::Parse(format!(
                    "record '{name}' has shape {:?}, expected [{rows}, {expected}]",
                    tensor.dims
                )));
            }
            let basis = canonicalize(&name, &tensor, pi.rep(), &rho)?;
            self.bases
                .write()
                .expect("catalog lock")
                .insert(key, (Arc::new(basis), tensor));
            loaded += 1;
        }
        Ok(loaded)
    }
}

/// Projects 32-bit basis columns back onto the intertwiner space and
/// re-orthonormalizes them in 64-bit. Fresh bases go through the same step
/// after rounding, so a basis read from the cache is bit-identical to the
/// one it was saved from.
fn canonicalize(
    name: &str,
    stored: &Tensor,
    pi: &Representation,
    rho: &Representation,
) -> Result<IntertwinerBasis> {
    let (rows, n) = (stored.dims[0], stored.dims[1]);
    let cols = DMatrix::from_fn(rows, n, |i, j| stored.data[i * n + j] as f64);
    let raw = IntertwinerBasis::from_columns(pi.dim(), rho.dim(), &cols)?;
    let mut cleaned: Vec<DMatrix<f64>> = Vec::with_capacity(raw.dim());
    for psi in raw.elements() {
        let mut v = project_equivariant(psi, pi, rho)?;
        for prev in &cleaned {
            let ip = prev.dot(&v);
            v -= prev * ip;
        }
        let norm = v.norm();
        if norm < 0.5 {
            return Err(Error::NumericalFailure(format!("basis '{name}' is degenerate")));
        }
        cleaned.push(v / norm);
    }
    Ok(IntertwinerBasis::from_elements(pi.dim(), rho.dim(), cleaned))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caches_and_reuses() {
        let cat = BasisCatalog::new();
        let a = cat.get("A1", "regular", 3).unwrap();
        let b = cat.get("A1", "regular", 3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.dim(), 9);
        assert_eq!(cat.len(), 1);
    }

    #[test]
    fn record_names() {
        let k = BasisKey::new("crelu(E)", "qm", 5);
        assert_eq!(BasisKey::parse_record_name(&k.record_name()).unwrap(), k);
        assert!(BasisKey::parse_record_name("A1|E").is_err());
    }

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bases.sftb");
        let cat = BasisCatalog::new();
        cat.get("regular", "regular", 3).unwrap();
        cat.get("E", "A1", 1).unwrap();
        cat.get("qm", "E", 3).unwrap();
        cat.save(&path).unwrap();

        let fresh = BasisCatalog::new();
        assert_eq!(fresh.load(&path).unwrap(), 3);
        let reloaded = fresh.get("regular", "regular", 3).unwrap();
        let pi = build_patch_rep(&capsule("regular").unwrap().rep, 3).unwrap();
        let rho = capsule("regular").unwrap().rep.clone();
        assert!(reloaded.residual(pi.rep(), &rho) <= 1e-12);
        assert!(reloaded.orthonormality_defect() <= 1e-12);
        let original = cat.get("regular", "regular", 3).unwrap();
        assert_eq!(original.elements(), reloaded.elements());
    }
}
