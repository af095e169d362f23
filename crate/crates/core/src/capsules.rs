//! Capsules: named representations with a fixed basis and a declared set of
//! admissible nonlinearities, plus fibers built by stacking capsules.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{enumerate_subgroups, subgroup_by_quotient_name};
use crate::rep::{
    decompose_type, direct_sum, quotient_rep, realization_class, Irrep, RealizationClass,
    RepType, Representation,
};

/// Ids of the built-in capsules: the five irreps followed by the quotient
/// capsules (the quotient by D4 itself is A1 and is not repeated).
pub const CATALOG_IDS: [&str; 14] = [
    "A1", "A2", "B1", "B2", "E", "regular", "qm", "qmr", "qmr2", "qmr3", "r2", "r", "r2m", "r2mr",
];

/// Classes of fiber-wise nonlinearity, used for admissibility.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityKind {
    Relu,
    AnyElementwise,
    /// `(ReLU(α), ReLU(−α))`; doubles the dimension.
    Crelu,
    /// `(ν(α), ν(−α))` for an arbitrary elementwise ν.
    Concat,
    /// Acts on the vector length only; preserves the dimension.
    NormActing,
}

/// The concrete nonlinearities the runtime ships.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    Identity,
    Relu,
    Crelu,
    /// `v ↦ v · relu(‖v‖ − b) / ‖v‖`, zero at `v = 0`.
    NormRelu,
}

impl Nonlinearity {
    pub fn tag(self) -> &'static str {
        match self {
            Nonlinearity::Identity => "identity",
            Nonlinearity::Relu => "relu",
            Nonlinearity::Crelu => "crelu",
            Nonlinearity::NormRelu => "norm-relu",
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "identity" => Ok(Nonlinearity::Identity),
            "relu" => Ok(Nonlinearity::Relu),
            "crelu" => Ok(Nonlinearity::Crelu),
            "norm-relu" => Ok(Nonlinearity::NormRelu),
            other => Err(Error::Parse(format!("unknown nonlinearity tag '{other}'"))),
        }
    }

    /// `None` for the identity, which every capsule admits.
    pub fn kind(self) -> Option<NonlinearityKind> {
        match self {
            Nonlinearity::Identity => None,
            Nonlinearity::Relu => Some(NonlinearityKind::Relu),
            Nonlinearity::Crelu => Some(NonlinearityKind::Crelu),
            Nonlinearity::NormRelu => Some(NonlinearityKind::NormActing),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Admissible nonlinearity classes for a realization class.
pub fn admissible_for(class: RealizationClass) -> Vec<NonlinearityKind> {
    use NonlinearityKind::*;
    match class {
        RealizationClass::Permutation => vec![Relu, AnyElementwise, Crelu, Concat, NormActing],
        RealizationClass::SignedPermutation => vec![Crelu, Concat, NormActing],
        RealizationClass::Monomial => vec![Crelu],
        RealizationClass::Orthogonal => vec![NormActing],
        RealizationClass::General => vec![],
    }
}

#[derive(Clone, Debug)]
pub struct Capsule {
    pub id: String,
    pub rep: Representation,
    pub realization: RealizationClass,
    pub admissible: Vec<NonlinearityKind>,
}

impl Capsule {
    pub fn new(id: impl Into<String>, rep: Representation) -> Self {
        let realization = realization_class(&rep);
        Capsule {
            id: id.into(),
            admissible: admissible_for(realization),
            rep,
            realization,
        }
    }

    pub fn dim(&self) -> usize {
        self.rep.dim()
    }

    pub fn admits(&self, nl: Nonlinearity) -> bool {
        match nl.kind() {
            None => true,
            Some(kind) => self.admissible.contains(&kind),
        }
    }

    pub fn rep_type(&self) -> RepType {
        decompose_type(&self.rep).expect("catalogued capsules are representations")
    }
}

fn build_capsule(id: &str) -> Result<Capsule> {
    if let Some(irrep) = Irrep::from_label(id) {
        return Ok(Capsule::new(id, irrep.rep()));
    }
    if let Some(k) = subgroup_by_quotient_name(id) {
        return Ok(Capsule::new(id, quotient_rep(&k)));
    }
    if let Some(inner) = id.strip_prefix("crelu(").and_then(|s| s.strip_suffix(')')) {
        let base = capsule(inner)?;
        let rep = act_rep(&base, NonlinearityKind::Crelu)?;
        return Ok(Capsule::new(id, rep));
    }
    Err(Error::UnknownCapsule(id.to_string()))
}

fn registry() -> &'static RwLock<HashMap<String, Arc<Capsule>>> {
    static REG: OnceLock<RwLock<HashMap<String, Arc<Capsule>>>> = OnceLock::new();
    REG.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Resolves a capsule id: a catalogue name or `crelu(<id>)` for the
/// post-CReLU capsule of another capsule.
pub fn capsule(id: &str) -> Result<Arc<Capsule>> {
    if let Some(c) = registry().read().expect("capsule registry").get(id) {
        return Ok(c.clone());
    }
    let built = Arc::new(build_capsule(id)?);
    let mut reg = registry().write().expect("capsule registry");
    Ok(reg.entry(id.to_string()).or_insert(built).clone())
}

/// The fourteen built-in capsules.
pub fn capsule_catalog() -> Vec<Arc<Capsule>> {
    debug_assert_eq!(enumerate_subgroups().len(), 10);
    CATALOG_IDS
        .iter()
        .map(|id| capsule(id).expect("built-in capsule"))
        .collect()
}

/// Capsule id after applying `nl`.
pub fn act_capsule_id(capsule_id: &str, nl: Nonlinearity) -> String {
    match nl {
        Nonlinearity::Crelu => format!("crelu({capsule_id})"),
        _ => capsule_id.to_string(),
    }
}

/// `ρ′` with `ν(ρ(h) v) = ρ′(h) ν(v)`.
///
/// For the concatenated kinds the output has a positive block followed by a
/// negative block: an entry `c > 0` at `(i, j)` maps `j⁺ → i⁺` and `j⁻ → i⁻`,
/// an entry `c < 0` maps `j⁺ → i⁻` and `j⁻ → i⁺`, both with weight `|c|`.
pub fn act_rep(capsule: &Capsule, kind: NonlinearityKind) -> Result<Representation> {
    if !capsule.admissible.contains(&kind) {
        return Err(Error::Inadmissible {
            capsule: capsule.id.clone(),
            nonlinearity: format!("{kind:?}"),
        });
    }
    match kind {
        NonlinearityKind::Relu | NonlinearityKind::AnyElementwise | NonlinearityKind::NormActing => {
            Ok(capsule.rep.clone())
        }
        NonlinearityKind::Crelu | NonlinearityKind::Concat => {
            let d = capsule.dim();
            Representation::new(
                capsule
                    .rep
                    .matrices()
                    .iter()
                    .map(|m| {
                        let mut out = DMatrix::zeros(2 * d, 2 * d);
                        for i in 0..d {
                            for j in 0..d {
                                let c = m[(i, j)];
                                if c > 0.0 {
                                    out[(i, j)] = c;
                                    out[(d + i, d + j)] = c;
                                } else if c < 0.0 {
                                    out[(d + i, j)] = -c;
                                    out[(i, d + j)] = -c;
                                }
                            }
                        }
                        out
                    })
                    .collect(),
            )
        }
    }
}

/// One `(capsule, multiplicity)` entry of a fiber. Deserializes from
/// either `{"capsule": "E", "mult": 2}` or the pair `["E", 2]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "EntryRepr")]
pub struct FiberEntry {
    pub capsule: String,
    pub mult: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EntryRepr {
    Pair(String, usize),
    Object(EntryObject),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryObject {
    capsule: String,
    mult: usize,
}

impl From<EntryRepr> for FiberEntry {
    fn from(r: EntryRepr) -> Self {
        match r {
            EntryRepr::Pair(capsule, mult) | EntryRepr::Object(EntryObject { capsule, mult }) => {
                FiberEntry { capsule, mult }
            }
        }
    }
}

/// Ordered stack of capsules; serialized as `[{"capsule": "regular", "mult": 3}, ...]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FiberSpec(pub Vec<FiberEntry>);

/// Location of one capsule copy inside a fiber.
#[derive(Clone, Debug)]
pub struct CapsuleSlot {
    pub entry: usize,
    pub copy: usize,
    pub offset: usize,
    pub capsule: Arc<Capsule>,
}

impl FiberSpec {
    pub fn new(entries: &[(&str, usize)]) -> Self {
        FiberSpec(
            entries
                .iter()
                .map(|(c, m)| FiberEntry {
                    capsule: c.to_string(),
                    mult: *m,
                })
                .collect(),
        )
    }

    pub fn single(capsule: &str, mult: usize) -> Self {
        Self::new(&[(capsule, mult)])
    }

    pub fn entries(&self) -> &[FiberEntry] {
        &self.0
    }

    /// Resolved capsule for each entry.
    pub fn capsules(&self) -> Result<Vec<Arc<Capsule>>> {
        self.0.iter().map(|e| capsule(&e.capsule)).collect()
    }

    /// `K = Σ mᵢ · dim ρⁱ`.
    pub fn channels(&self) -> Result<usize> {
        Ok(self
            .capsules()?
            .iter()
            .zip(&self.0)
            .map(|(c, e)| c.dim() * e.mult)
            .sum())
    }

    /// Capsule copies in channel order.
    pub fn slots(&self) -> Result<Vec<CapsuleSlot>> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (entry, (e, cap)) in self.0.iter().zip(self.capsules()?).enumerate() {
            for copy in 0..e.mult {
                out.push(CapsuleSlot {
                    entry,
                    copy,
                    offset,
                    capsule: cap.clone(),
                });
                offset += cap.dim();
            }
        }
        Ok(out)
    }

    /// Channel offset of each entry's first copy.
    pub fn entry_offsets(&self) -> Result<Vec<usize>> {
        let mut offsets = Vec::with_capacity(self.0.len());
        let mut off = 0;
        for (e, cap) in self.0.iter().zip(self.capsules()?) {
            offsets.push(off);
            off += e.mult * cap.dim();
        }
        Ok(offsets)
    }

    /// Block-diagonal representation with `mᵢ` copies of each capsule, in order.
    pub fn fiber_rep(&self) -> Result<Representation> {
        let mut blocks = Vec::new();
        for (e, cap) in self.0.iter().zip(self.capsules()?) {
            for _ in 0..e.mult {
                blocks.push(cap.rep.clone());
            }
        }
        if blocks.is_empty() {
            return Ok(Representation::trivial(0));
        }
        direct_sum(&blocks)
    }

    /// Fiber after applying `nl` to every capsule.
    pub fn after(&self, nl: Nonlinearity) -> Result<FiberSpec> {
        for cap in self.capsules()? {
            if !cap.admits(nl) {
                return Err(Error::Inadmissible {
                    capsule: cap.id.clone(),
                    nonlinearity: nl.tag().into(),
                });
            }
        }
        Ok(FiberSpec(
            self.0
                .iter()
                .map(|e| FiberEntry {
                    capsule: act_capsule_id(&e.capsule, nl),
                    mult: e.mult,
                })
                .collect(),
        ))
    }

    pub fn is_a1_only(&self) -> bool {
        self.0.iter().all(|e| e.capsule == "A1" || e.mult == 0)
    }
}

impl fmt::Display for FiberSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "({}, {})", e.capsule, e.mult)?;
        }
        f.write_str("]")
    }
}

/// Residual additions require identical ordered capsule lists; equal
/// channel counts or equal types are not enough.
pub fn check_addable(a: &FiberSpec, b: &FiberSpec) -> bool {
    a == b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Dihedral;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn relu_vec(v: &DVector<f64>) -> DVector<f64> {
        v.map(|x| x.max(0.0))
    }

    fn crelu_vec(v: &DVector<f64>) -> DVector<f64> {
        let d = v.len();
        DVector::from_fn(2 * d, |i, _| {
            if i < d {
                v[i].max(0.0)
            } else {
                (-v[i - d]).max(0.0)
            }
        })
    }

    #[test]
    fn catalog_dims() {
        let dims: Vec<usize> = ["regular", "qm", "r", "A1"]
            .iter()
            .map(|id| capsule(id).unwrap().dim())
            .collect();
        assert_eq!(dims, vec![8, 4, 2, 1]);
        assert_eq!(capsule_catalog().len(), 14);
    }

    #[test]
    fn admissibility_examples() {
        let reg = capsule("regular").unwrap();
        assert!(reg.admissible.contains(&NonlinearityKind::AnyElementwise));
        let e = capsule("E").unwrap();
        assert!(e.admissible.contains(&NonlinearityKind::Crelu));
        assert!(!e.admits(Nonlinearity::Relu));
        assert!(e.admits(Nonlinearity::Identity));
    }

    #[test]
    fn act_rep_examples() {
        let reg = capsule("regular").unwrap();
        assert_eq!(act_rep(&reg, NonlinearityKind::Relu).unwrap(), reg.rep);
        let a1 = capsule("A1").unwrap();
        assert_eq!(act_rep(&a1, NonlinearityKind::Relu).unwrap(), a1.rep);
        let e = capsule("E").unwrap();
        let act = act_rep(&e, NonlinearityKind::Crelu).unwrap();
        assert_eq!(act.dim(), 4);
        assert!(act.is_representation(0.0));
        assert_eq!(realization_class(&act), RealizationClass::Permutation);
        assert!(matches!(
            act_rep(&e, NonlinearityKind::Relu),
            Err(Error::Inadmissible { .. })
        ));
    }

    #[test]
    fn crelu_commutes_with_e() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = capsule("E").unwrap();
        let act = act_rep(&e, NonlinearityKind::Crelu).unwrap();
        for _ in 0..100 {
            let v = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            for h in Dihedral::all() {
                assert_eq!(crelu_vec(&(e.rep.matrix(h) * &v)), act.matrix(h) * crelu_vec(&v));
            }
        }
    }

    #[test]
    fn relu_commutes_with_quotients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for id in ["regular", "qm", "r2mr"] {
            let c = capsule(id).unwrap();
            for _ in 0..20 {
                let v = DVector::from_fn(c.dim(), |_, _| rng.gen_range(-1.0..1.0));
                for h in Dihedral::all() {
                    assert_eq!(relu_vec(&(c.rep.matrix(h) * &v)), c.rep.matrix(h) * relu_vec(&v));
                }
            }
        }
    }

    #[test]
    fn quotient_capsules_are_permutations() {
        for id in &CATALOG_IDS[5..] {
            assert_eq!(capsule(id).unwrap().realization, RealizationClass::Permutation);
        }
    }

    #[test]
    fn regular_contains_every_irrep() {
        assert_eq!(capsule("regular").unwrap().rep_type(), RepType([1, 1, 1, 1, 2]));
    }

    #[test]
    fn fiber_rep_examples() {
        let a1 = FiberSpec::single("A1", 1);
        assert_eq!(a1.fiber_rep().unwrap(), Irrep::A1.rep());
        let reg2 = FiberSpec::single("regular", 2);
        assert_eq!(reg2.fiber_rep().unwrap().dim(), 16);
        assert_eq!(reg2.channels().unwrap(), 16);
        let mixed = FiberSpec::new(&[("regular", 1), ("qm", 1)]);
        let ty = decompose_type(&mixed.fiber_rep().unwrap()).unwrap();
        assert_eq!(
            ty,
            capsule("regular").unwrap().rep_type() + capsule("qm").unwrap().rep_type()
        );
        assert!(matches!(
            FiberSpec::single("Z9", 1).fiber_rep(),
            Err(Error::UnknownCapsule(_))
        ));
    }

    #[test]
    fn addability() {
        let a = FiberSpec::single("regular", 3);
        assert!(check_addable(&a, &a.clone()));
        let b = FiberSpec::single("qm", 6);
        assert_eq!(a.channels().unwrap(), b.channels().unwrap());
        assert!(!check_addable(&a, &b));
        let c = FiberSpec::new(&[("A1", 1), ("E", 1)]);
        let d = FiberSpec::new(&[("E", 1), ("A1", 1)]);
        assert!(!check_addable(&c, &d));
        assert_ne!(c.fiber_rep().unwrap(), d.fiber_rep().unwrap());
    }

    #[test]
    fn crelu_fiber_doubles_channels() {
        let f = FiberSpec::single("E", 2);
        let g = f.after(Nonlinearity::Crelu).unwrap();
        assert_eq!(g, FiberSpec::single("crelu(E)", 2));
        assert_eq!(f.channels().unwrap(), 4);
        assert_eq!(g.channels().unwrap(), 8);
        assert!(f.after(Nonlinearity::Relu).is_err());
    }

    #[test]
    fn fiber_json_shape() {
        let spec: FiberSpec =
            serde_json::from_str(r#"[{"capsule": "regular", "mult": 3}, {"capsule": "E", "mult": 1}]"#)
                .unwrap();
        assert_eq!(spec, FiberSpec::new(&[("regular", 3), ("E", 1)]));
    }
}
