//! The point group D4 and the torus-restricted wallpaper group p4m.
//!
//! Elements of D4 are kept in the canonical form `m^a r^b` with `a ∈ {0,1}`
//! and `b ∈ {0,1,2,3}`. The integer 2×2 realization is
//!
//! ```text
//! r = [[0, -1],    m = [[-1, 0],
//!      [1,  0]]         [ 0, 1]]
//! ```
//!
//! so `r` is a counter-clockwise quarter turn acting on column vectors and
//! `m` flips the first coordinate. Elements of p4m are pairs `(t, h)` read as
//! `x ↦ R(h)·x + t (mod N)` on an odd-sized torus.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer 2×2 matrix, row-major.
pub type IntMat2 = [[i64; 2]; 2];
/// Homogeneous 3×3 integer matrix `[[R, T], [0, 1]]`.
pub type IntMat3 = [[i64; 3]; 3];

/// Element `m^reflect · r^rotate` of D4.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Dihedral {
    reflect: u8,
    rotate: u8,
}

impl Dihedral {
    pub const E: Dihedral = Dihedral { reflect: 0, rotate: 0 };
    pub const R: Dihedral = Dihedral { reflect: 0, rotate: 1 };
    pub const M: Dihedral = Dihedral { reflect: 1, rotate: 0 };

    /// Builds `m^reflect r^rotate`, reducing exponents modulo 2 and 4.
    pub fn new(reflect: u8, rotate: u8) -> Self {
        Dihedral {
            reflect: reflect % 2,
            rotate: rotate % 4,
        }
    }

    pub fn identity() -> Self {
        Self::E
    }

    /// All eight elements in the order e, r, r2, r3, m, mr, mr2, mr3.
    pub fn all() -> [Dihedral; 8] {
        let mut out = [Self::E; 8];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = Self::from_index(i);
        }
        out
    }

    /// Position in [`Dihedral::all`].
    pub fn index(self) -> usize {
        4 * self.reflect as usize + self.rotate as usize
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < 8, "D4 index out of range: {i}");
        Dihedral::new((i / 4) as u8, (i % 4) as u8)
    }

    pub fn reflect_exp(self) -> u8 {
        self.reflect
    }

    pub fn rotate_exp(self) -> u8 {
        self.rotate
    }

    pub fn is_reflection(self) -> bool {
        self.reflect == 1
    }

    /// Group product `self · other`.
    ///
    /// Uses `r^b m = m r^{-b}`: `(m^a r^b)(m^c r^d) = m^{a+c} r^{(-1)^c b + d}`.
    pub fn compose(self, other: Dihedral) -> Dihedral {
        let b = if other.reflect == 1 {
            (4 - self.rotate) % 4
        } else {
            self.rotate
        };
        Dihedral::new(self.reflect + other.reflect, b + other.rotate)
    }

    pub fn inverse(self) -> Dihedral {
        if self.reflect == 1 {
            self
        } else {
            Dihedral::new(0, 4 - self.rotate)
        }
    }

    /// The integer 2×2 matrix of this element.
    pub fn matrix(self) -> IntMat2 {
        const ROT: IntMat2 = [[0, -1], [1, 0]];
        const MIR: IntMat2 = [[-1, 0], [0, 1]];
        let mut acc: IntMat2 = [[1, 0], [0, 1]];
        if self.reflect == 1 {
            acc = MIR;
        }
        for _ in 0..self.rotate {
            acc = mat2_mul(&acc, &ROT);
        }
        acc
    }

    /// Applies the 2×2 matrix to an integer vector.
    pub fn apply(self, v: [i64; 2]) -> [i64; 2] {
        let m = self.matrix();
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn label(self) -> &'static str {
        const LABELS: [&str; 8] = ["e", "r", "r2", "r3", "m", "mr", "mr2", "mr3"];
        LABELS[self.index()]
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_index(rng.gen_range(0..8))
    }
}

pub fn mat2_mul(a: &IntMat2, b: &IntMat2) -> IntMat2 {
    let mut out = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

impl fmt::Debug for Dihedral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl fmt::Display for Dihedral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Dihedral {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dihedral::all()
            .into_iter()
            .find(|g| g.label() == s)
            .ok_or_else(|| Error::Parse(format!("unknown D4 element '{s}'")))
    }
}

impl Serialize for Dihedral {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Dihedral {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An `N×N` torus of pixels with rotations about pixel `(0, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
}

impl TorusGrid {
    /// Odd side lengths only; an even torus has no pixel-centred rotation
    /// structure matching the plane.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "torus side must be odd and positive, got {n}"
            )));
        }
        Ok(TorusGrid { n })
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn num_points(&self) -> usize {
        self.n * self.n
    }

    pub fn wrap(&self, v: i64) -> usize {
        v.rem_euclid(self.n as i64) as usize
    }

    pub fn wrap_point(&self, p: [i64; 2]) -> [usize; 2] {
        [self.wrap(p[0]), self.wrap(p[1])]
    }

    /// Row-major linear index of a grid point.
    pub fn linear(&self, p: [usize; 2]) -> usize {
        p[0] * self.n + p[1]
    }

    pub fn point(&self, idx: usize) -> [usize; 2] {
        [idx / self.n, idx % self.n]
    }

    pub fn contains(&self, p: [usize; 2]) -> bool {
        p[0] < self.n && p[1] < self.n
    }

    /// Signed representative of `v (mod N)` in `-(N-1)/2 ..= (N-1)/2`.
    pub fn centered(&self, v: i64) -> i64 {
        let w = self.wrap(v) as i64;
        let half = (self.n as i64 - 1) / 2;
        if w > half {
            w - self.n as i64
        } else {
            w
        }
    }

    pub fn points(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        (0..self.num_points()).map(|i| self.point(i))
    }
}

/// Element `t · h` of p4m acting on a torus grid: `x ↦ R(h) x + t (mod N)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Isometry {
    pub h: Dihedral,
    t: [usize; 2],
    grid: TorusGrid,
}

impl Isometry {
    pub fn new(h: Dihedral, t: [i64; 2], grid: TorusGrid) -> Self {
        Isometry {
            h,
            t: grid.wrap_point(t),
            grid,
        }
    }

    pub fn identity(grid: TorusGrid) -> Self {
        Self::new(Dihedral::E, [0, 0], grid)
    }

    pub fn translation(t: [i64; 2], grid: TorusGrid) -> Self {
        Self::new(Dihedral::E, t, grid)
    }

    pub fn point_group(h: Dihedral, grid: TorusGrid) -> Self {
        Self::new(h, [0, 0], grid)
    }

    pub fn t(&self) -> [usize; 2] {
        self.t
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    fn t_signed(&self) -> [i64; 2] {
        [self.t[0] as i64, self.t[1] as i64]
    }

    /// `(t1 h1)(t2 h2) = (t1 + R1 t2) (h1 h2)`.
    pub fn compose(&self, other: &Isometry) -> Result<Isometry> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.side(),
                right: other.grid.side(),
            });
        }
        let rt = self.h.apply(other.t_signed());
        let t = [self.t_signed()[0] + rt[0], self.t_signed()[1] + rt[1]];
        Ok(Isometry::new(self.h.compose(other.h), t, self.grid))
    }

    /// `(t h)^{-1} = (-R^{-1} t) h^{-1}`.
    pub fn inverse(&self) -> Isometry {
        let hinv = self.h.inverse();
        let rt = hinv.apply(self.t_signed());
        Isometry::new(hinv, [-rt[0], -rt[1]], self.grid)
    }

    /// `R x + T (mod N)`.
    pub fn act(&self, x: [usize; 2]) -> [usize; 2] {
        let rx = self.h.apply([x[0] as i64, x[1] as i64]);
        self.grid
            .wrap_point([rx[0] + self.t[0] as i64, rx[1] + self.t[1] as i64])
    }

    /// Homogeneous matrix `[[R, T], [0, 1]]` with `T` reduced mod N.
    pub fn homogeneous(&self) -> IntMat3 {
        let r = self.h.matrix();
        [
            [r[0][0], r[0][1], self.t[0] as i64],
            [r[1][0], r[1][1], self.t[1] as i64],
            [0, 0, 1],
        ]
    }

    /// Inverse of [`Isometry::homogeneous`], reducing the translation mod N.
    pub fn from_homogeneous(m: &IntMat3, grid: TorusGrid) -> Result<Isometry> {
        let r: IntMat2 = [[m[0][0], m[0][1]], [m[1][0], m[1][1]]];
        let h = Dihedral::all()
            .into_iter()
            .find(|g| g.matrix() == r)
            .ok_or_else(|| Error::InvalidArgument("linear part is not in D4".into()))?;
        if m[2] != [0, 0, 1] {
            return Err(Error::InvalidArgument("not a homogeneous matrix".into()));
        }
        Ok(Isometry::new(h, [m[0][2], m[1][2]], grid))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, grid: TorusGrid) -> Self {
        let n = grid.side() as i64;
        Isometry::new(
            Dihedral::random(rng),
            [rng.gen_range(0..n), rng.gen_range(0..n)],
            grid,
        )
    }

    /// Text label of the form `h@[tx,ty]`.
    pub fn label(&self) -> String {
        format!("{}@[{},{}]", self.h, self.t[0], self.t[1])
    }
}

/// Homogeneous matrix product with translation column reduced mod `n`.
pub fn mat3_mul_mod(a: &IntMat3, b: &IntMat3, n: usize) -> IntMat3 {
    let mut out = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    let n = n as i64;
    out[0][2] = out[0][2].rem_euclid(n);
    out[1][2] = out[1][2].rem_euclid(n);
    out
}

/// The section `x ↦ x̄`: the pure translation by `x`.
pub fn section(x: [usize; 2], grid: TorusGrid) -> Isometry {
    Isometry::translation([x[0] as i64, x[1] as i64], grid)
}

/// JSON / CLI text form `{"h": "mr", "t": [tx, ty]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsometryRecord {
    pub h: Dihedral,
    pub t: [i64; 2],
}

impl From<&Isometry> for IsometryRecord {
    fn from(g: &Isometry) -> Self {
        IsometryRecord {
            h: g.h,
            t: [g.t[0] as i64, g.t[1] as i64],
        }
    }
}

impl IsometryRecord {
    pub fn on_grid(&self, grid: TorusGrid) -> Isometry {
        Isometry::new(self.h, self.t, grid)
    }
}

/// A subgroup of D4, stored as a bitmask over [`Dihedral::index`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subgroup {
    mask: u8,
}

impl Subgroup {
    /// Validates closure under composition (which, for a finite non-empty
    /// subset containing `e`, also gives inverses).
    pub fn new(elements: &[Dihedral]) -> Result<Self> {
        let mask = elements.iter().fold(0u8, |m, g| m | (1 << g.index()));
        Self::from_mask(mask)
    }

    pub fn from_mask(mask: u8) -> Result<Self> {
        let sg = Subgroup { mask };
        if !sg.contains(Dihedral::E) {
            return Err(Error::InvalidSubgroup(format!(
                "{sg:?} does not contain the identity"
            )));
        }
        for a in sg.elements() {
            for b in sg.elements() {
                if !sg.contains(a.compose(b)) {
                    return Err(Error::InvalidSubgroup(format!(
                        "{sg:?} not closed: {a}·{b} = {}",
                        a.compose(b)
                    )));
                }
            }
        }
        Ok(sg)
    }

    pub fn trivial() -> Self {
        Subgroup { mask: 1 }
    }

    pub fn whole() -> Self {
        Subgroup { mask: 0xff }
    }

    pub fn contains(&self, g: Dihedral) -> bool {
        self.mask & (1 << g.index()) != 0
    }

    pub fn elements(&self) -> Vec<Dihedral> {
        Dihedral::all()
            .into_iter()
            .filter(|g| self.contains(*g))
            .collect()
    }

    pub fn order(&self) -> usize {
        self.mask.count_ones() as usize
    }

    /// Left cosets `hK`, ordered by their smallest element.
    pub fn cosets(&self) -> Vec<Vec<Dihedral>> {
        let mut seen = 0u8;
        let mut out = Vec::new();
        for h in Dihedral::all() {
            if seen & (1 << h.index()) != 0 {
                continue;
            }
            let mut coset: Vec<Dihedral> = self.elements().iter().map(|k| h.compose(*k)).collect();
            coset.sort();
            for g in &coset {
                seen |= 1 << g.index();
            }
            out.push(coset);
        }
        out
    }

    /// Index of the coset containing `g` in [`Subgroup::cosets`].
    pub fn coset_index(&self, g: Dihedral) -> usize {
        self.cosets()
            .iter()
            .position(|c| c.contains(&g))
            .expect("cosets partition D4")
    }

    /// Name of the associated quotient capsule.
    pub fn quotient_name(&self) -> &'static str {
        let labels: Vec<&str> = self.elements().iter().map(|g| g.label()).collect();
        match labels.as_slice() {
            ["e"] => "regular",
            ["e", "m"] => "qm",
            ["e", "mr"] => "qmr",
            ["e", "mr2"] => "qmr2",
            ["e", "mr3"] => "qmr3",
            ["e", "r2"] => "r2",
            ["e", "r", "r2", "r3"] => "r",
            ["e", "r2", "m", "mr2"] => "r2m",
            ["e", "r2", "mr", "mr3"] => "r2mr",
            _ if self.order() == 8 => "A1",
            _ => unreachable!("D4 has exactly ten subgroups"),
        }
    }
}

impl fmt::Debug for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.elements()).finish()
    }
}

/// Every subgroup of D4, ordered by decreasing quotient size
/// (regular, qm, qmr, qmr2, qmr3, r2, r, r2m, r2mr, A1).
pub fn enumerate_subgroups() -> Vec<Subgroup> {
    let mut subgroups: Vec<Subgroup> = (0u16..=255)
        .filter_map(|m| Subgroup::from_mask(m as u8).ok())
        .collect();
    const ORDER: [&str; 10] = [
        "regular", "qm", "qmr", "qmr2", "qmr3", "r2", "r", "r2m", "r2mr", "A1",
    ];
    subgroups.sort_by_key(|s| ORDER.iter().position(|n| *n == s.quotient_name()));
    subgroups
}

/// Looks up a subgroup by its quotient capsule name.
pub fn subgroup_by_quotient_name(name: &str) -> Option<Subgroup> {
    enumerate_subgroups()
        .into_iter()
        .find(|s| s.quotient_name() == name)
}
