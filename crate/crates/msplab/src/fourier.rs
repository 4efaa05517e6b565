//! Boolean Fourier analysis on `{+1,-1}^P` and set-structure combinatorics.
//!
//! Points of the hypercube are indexed by integers: bit `b` of the index is set
//! when `z_{b+1} = +1`. Subsets of `[P]` are bitmasks with bit `b` standing for
//! coordinate `b+1`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;

use crate::error::{check_size, invalid, Error, Result};

/// Largest `P` for operations that tabulate all `2^P` points.
pub const MAX_TABULATED_P: usize = 16;
/// Largest `P` for the brute-force symmetry search.
pub const MAX_SYMMETRY_P: usize = 8;
/// Coefficients below this magnitude are dropped after transforms.
pub const ZERO_THRESHOLD: f64 = 1e-12;

/// A subset of `[P]` stored as a bitmask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subset(pub u64);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    /// Builds a subset from 1-based coordinate indices.
    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let mut bits = 0u64;
        for &i in indices {
            if i == 0 || i > 64 {
                return invalid(format!("coordinate index {i} out of range 1..=64"));
            }
            bits |= 1 << (i - 1);
        }
        Ok(Subset(bits))
    }

    /// The subset `{1, ..., k}`.
    pub fn prefix(k: usize) -> Self {
        if k >= 64 {
            Subset(u64::MAX)
        } else {
            Subset((1u64 << k) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        Subset(1 << (i - 1))
    }

    /// 1-based indices in increasing order.
    pub fn indices(self) -> Vec<usize> {
        (0..64).filter(|b| self.0 >> b & 1 == 1).map(|b| b + 1).collect()
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        i >= 1 && i <= 64 && self.0 >> (i - 1) & 1 == 1
    }

    pub fn union(self, o: Subset) -> Subset {
        Subset(self.0 | o.0)
    }

    pub fn minus(self, o: Subset) -> Subset {
        Subset(self.0 & !o.0)
    }

    pub fn xor(self, o: Subset) -> Subset {
        Subset(self.0 ^ o.0)
    }

    pub fn is_subset_of(self, o: Subset) -> bool {
        self.0 & !o.0 == 0
    }

    /// Largest coordinate in the subset, 0 when empty.
    pub fn max_index(self) -> usize {
        64 - self.0.leading_zeros() as usize
    }

    /// Value of the monomial `chi_S` at the hypercube point with index `idx`.
    #[inline]
    pub fn chi(self, idx: usize) -> f64 {
        if (self.0 & !(idx as u64)).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Image under a permutation of `[P]` given 0-based (`perm[i]` is the image of `i`).
    pub fn permute(self, perm: &[usize]) -> Subset {
        let mut out = 0u64;
        for (b, &t) in perm.iter().enumerate() {
            if self.0 >> b & 1 == 1 {
                out |= 1 << t;
            }
        }
        Subset(out)
    }

    /// Column label used in CSV headers: `c_1_2`, and `c_0` for the empty set.
    pub fn label(self) -> String {
        if self.is_empty() {
            return "c_0".to_string();
        }
        let mut s = String::from("c");
        for i in self.indices() {
            s.push('_');
            s.push_str(&i.to_string());
        }
        s
    }

    /// Monomial notation such as `z1z2`, or `1` for the empty set.
    pub fn monomial(self) -> String {
        if self.is_empty() {
            return "1".to_string();
        }
        self.indices().iter().map(|i| format!("z{i}")).collect()
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices().iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// `h : {+1,-1}^P -> R` stored by its nonzero Fourier coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierFunction {
    p: usize,
    coeffs: BTreeMap<Subset, f64>,
}

impl FourierFunction {
    pub fn zero(p: usize) -> Self {
        FourierFunction { p, coeffs: BTreeMap::new() }
    }

    /// Builds a function from `(subset, coefficient)` pairs. Repeated subsets add up
    /// and exact zeros are dropped.
    pub fn new(p: usize, terms: impl IntoIterator<Item = (Subset, f64)>) -> Result<Self> {
        check_size("P", p, 64)?;
        let mut coeffs = BTreeMap::new();
        let full = Subset::prefix(p);
        for (s, a) in terms {
            if !s.is_subset_of(full) {
                return invalid(format!("subset {s} is not contained in [{p}]"));
            }
            if !a.is_finite() {
                return invalid(format!("coefficient of {s} is not finite"));
            }
            *coeffs.entry(s).or_insert(0.0) += a;
        }
        coeffs.retain(|_, a| *a != 0.0);
        Ok(FourierFunction { p, coeffs })
    }

    /// Convenience constructor from 1-based index lists.
    pub fn from_terms(p: usize, terms: &[(&[usize], f64)]) -> Result<Self> {
        let mut out = Vec::with_capacity(terms.len());
        for (idx, a) in terms {
            out.push((Subset::from_indices(idx)?, *a));
        }
        Self::new(p, out)
    }

    /// The vanilla staircase `sum_k alpha_k z_1...z_k`.
    pub fn staircase(alphas: &[f64]) -> Result<Self> {
        let p = alphas.len();
        Self::new(p, alphas.iter().enumerate().map(|(k, &a)| (Subset::prefix(k + 1), a)))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn coeff(&self, s: Subset) -> f64 {
        self.coeffs.get(&s).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Subset, f64)> + '_ {
        self.coeffs.iter().map(|(s, a)| (*s, *a))
    }

    pub fn support(&self) -> Vec<Subset> {
        self.coeffs.keys().copied().collect()
    }

    pub fn structure(&self) -> SetStructure {
        SetStructure { p: self.p, sets: self.support() }
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `sum_S alpha_S^2`, which equals `E_z[h(z)^2]`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.values().map(|a| a * a).sum()
    }

    /// Evaluates at a sign vector given as reals equal to `+1` or `-1`.
    pub fn evaluate(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.p {
            return invalid(format!("point has length {}, expected {}", z.len(), self.p));
        }
        let mut idx = 0usize;
        for (b, &v) in z.iter().enumerate() {
            if v == 1.0 {
                if b < usize::BITS as usize {
                    idx |= 1 << b;
                }
            } else if v != -1.0 {
                return invalid(format!("entry {v} at position {} is not +1 or -1", b + 1));
            }
        }
        Ok(self.evaluate_index(idx))
    }

    /// Evaluates at the hypercube point with the given index.
    pub fn evaluate_index(&self, idx: usize) -> f64 {
        self.coeffs.iter().map(|(s, a)| a * s.chi(idx)).sum()
    }

    /// Values at all `2^P` points in index order.
    pub fn table(&self) -> Result<Vec<f64>> {
        check_size("P", self.p, MAX_TABULATED_P)?;
        Ok((0..1usize << self.p).map(|i| self.evaluate_index(i)).collect())
    }

    /// Writes the text format: a `P=<int>` header, then `S=<indices> alpha=<value>` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("P={}\n", self.p);
        for (s, a) in &self.coeffs {
            let idx: Vec<String> = s.indices().iter().map(|i| i.to_string()).collect();
            out.push_str(&format!("S={} alpha={}\n", idx.join(","), a));
        }
        out
    }

    /// Parses the text format written by [`FourierFunction::to_text`].
    /// Blank lines and lines starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut p: Option<usize> = None;
        let mut terms = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = n + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: lineno, msg };
            if let Some(rest) = line.strip_prefix("P=") {
                if p.is_some() {
                    return Err(perr("duplicate P header".into()));
                }
                p = Some(rest.trim().parse().map_err(|e| perr(format!("bad P: {e}")))?);
                continue;
            }
            let Some(rest) = line.strip_prefix("S=") else {
                return Err(perr(format!("unrecognised line `{line}`")));
            };
            let (set_part, alpha_part) = match rest.find("alpha=") {
                Some(pos) => (rest[..pos].trim(), rest[pos + 6..].trim()),
                None => return Err(perr("missing alpha=".into())),
            };
            let mut idx = Vec::new();
            for tok in set_part.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                idx.push(tok.parse::<usize>().map_err(|e| perr(format!("bad index `{tok}`: {e}")))?);
            }
            let alpha: f64 = alpha_part.parse().map_err(|e| perr(format!("bad alpha: {e}")))?;
            let s = Subset::from_indices(&idx).map_err(|e| perr(e.to_string()))?;
            terms.push((s, alpha));
        }
        let p = p.ok_or(Error::Parse { line: 0, msg: "missing P= header".into() })?;
        Self::new(p, terms)
    }

    /// Human-readable polynomial such as `z1 + 0.99*z2`.
    pub fn pretty(&self) -> String {
        if self.coeffs.is_empty() {
            return "0".to_string();
        }
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .map(|(s, a)| if *a == 1.0 { s.monomial() } else { format!("{a}*{}", s.monomial()) })
            .collect();
        parts.join(" + ")
    }
}

/// Walsh transform of a table of `2^P` values.
///
/// Uses the in-place fast transform, `O(P 2^P)`.
pub fn walsh_transform(table: &[f64]) -> Result<FourierFunction> {
    let n = table.len();
    if n == 0 || !n.is_power_of_two() {
        return invalid(format!("table length {n} is not a power of two"));
    }
    let p = n.trailing_zeros() as usize;
    check_size("P", p, MAX_TABULATED_P)?;
    let mut a = table.to_vec();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (a[j], a[j + h]);
                a[j] = x + y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
    // The butterfly gives sum_x (-1)^{|S & x|} t[x]; our chi_S carries the sign
    // of the cleared bits instead, hence the (-1)^{|S|} correction.
    let scale = 1.0 / n as f64;
    let terms = a.into_iter().enumerate().filter_map(|(s, v)| {
        let sign = if (s as u64).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        let alpha = sign * v * scale;
        (alpha.abs() >= ZERO_THRESHOLD).then_some((Subset(s as u64), alpha))
    });
    FourierFunction::new(p, terms)
}

/// A collection of distinct subsets of `[P]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetStructure {
    pub p: usize,
    pub sets: Vec<Subset>,
}

impl SetStructure {
    pub fn new(p: usize, sets: Vec<Subset>) -> Result<Self> {
        let full = Subset::prefix(p);
        for (i, s) in sets.iter().enumerate() {
            if !s.is_subset_of(full) {
                return invalid(format!("set {s} is not contained in [{p}]"));
            }
            if sets[..i].contains(s) {
                return invalid(format!("set {s} appears twice"));
            }
        }
        Ok(SetStructure { p, sets })
    }

    pub fn from_indices(p: usize, sets: &[&[usize]]) -> Result<Self> {
        let sets = sets.iter().map(|s| Subset::from_indices(s)).collect::<Result<Vec<_>>>()?;
        Self::new(p, sets)
    }

    pub fn union(&self) -> Subset {
        self.sets.iter().fold(Subset::EMPTY, |u, s| u.union(*s))
    }
}

/// Outcome of the merged-staircase test.
#[derive(Clone, Debug, PartialEq)]
pub struct MspResult {
    pub is_msp: bool,
    /// A witness ordering, present iff `is_msp`.
    pub ordering: Option<Vec<Subset>>,
    /// Smallest `l` such that some ordering introduces at most `l` new coordinates per set.
    pub leap: usize,
    /// Largest sub-structure reachable one new coordinate at a time.
    pub reachable: Vec<Subset>,
    /// Coordinates used by the structure but never reached.
    pub blocked_coords: Subset,
    /// `sum` of `alpha_S^2` over unreachable sets, when coefficients were supplied.
    pub stuck_risk_lower_bound: Option<f64>,
}

/// Greedy pass at fixed leap `l`: repeatedly emit the first remaining set that adds
/// at most `l` coordinates to the union of emitted sets.
fn greedy(sets: &[Subset], l: usize) -> Vec<Subset> {
    let mut remaining: Vec<Subset> = sets.to_vec();
    let mut union = Subset::EMPTY;
    let mut out = Vec::with_capacity(sets.len());
    loop {
        let pick = remaining.iter().position(|s| s.minus(union).len() <= l);
        match pick {
            Some(i) => {
                let s = remaining.remove(i);
                union = union.union(s);
                out.push(s);
            }
            None => return out,
        }
    }
}

/// Tests the merged-staircase property and computes the leap and reachable closure.
///
/// A set's number of new coordinates only shrinks as the union grows, so a greedy
/// pick can never destroy a valid ordering; greedy at fixed `l` is therefore complete.
pub fn is_msp(s: &SetStructure, coeffs: Option<&FourierFunction>) -> MspResult {
    let sets = &s.sets;
    let max_leap = sets.iter().map(|x| x.len()).max().unwrap_or(0);
    let mut leap = 0;
    while greedy(sets, leap).len() < sets.len() {
        leap += 1;
        debug_assert!(leap <= max_leap);
    }
    let reachable = greedy(sets, 1);
    let is_msp = reachable.len() == sets.len();
    let reach_union = reachable.iter().fold(Subset::EMPTY, |u, x| u.union(*x));
    let blocked_coords = s.union().minus(reach_union);
    let stuck_risk_lower_bound =
        coeffs.map(|h| h.iter().filter(|(t, _)| !reachable.contains(t)).map(|(_, a)| a * a).sum());
    MspResult {
        is_msp,
        ordering: is_msp.then(|| reachable.clone()),
        leap,
        reachable,
        blocked_coords,
        stuck_risk_lower_bound,
    }
}

/// Leap by exhaustive search over all orderings. Exponential; meant as an oracle
/// for small structures.
pub fn leap_bruteforce(sets: &[Subset]) -> Result<usize> {
    check_size("number of sets", sets.len(), 9)?;
    let mut order: Vec<usize> = (0..sets.len()).collect();
    let mut best = usize::MAX;
    loop {
        let mut union = Subset::EMPTY;
        let mut worst = 0;
        for &i in &order {
            worst = worst.max(sets[i].minus(union).len());
            union = union.union(sets[i]);
        }
        best = best.min(worst);
        if !next_permutation(&mut order) {
            break;
        }
    }
    Ok(if sets.is_empty() { 0 } else { best })
}

/// Advances to the next lexicographic permutation; false when wrapped around.
pub fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// All non-identity coordinate permutations leaving `h` unchanged.
///
/// Permutations are 0-based: `tau[i]` is the image of coordinate `i+1` minus one.
pub fn detect_symmetries(h: &FourierFunction) -> Result<Vec<Vec<usize>>> {
    check_size("P", h.p(), MAX_SYMMETRY_P)?;
    let mut perm: Vec<usize> = (0..h.p()).collect();
    let mut out = Vec::new();
    while next_permutation(&mut perm) {
        let invariant = h.iter().all(|(s, a)| (h.coeff(s.permute(&perm)) - a).abs() <= ZERO_THRESHOLD);
        if invariant {
            out.push(perm.clone());
        }
    }
    Ok(out)
}

/// Random coefficients `±U[lo, hi]` on each set of the structure.
pub fn random_msp_function<R: Rng + ?Sized>(
    s: &SetStructure,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<FourierFunction> {
    if !(lo > 0.0 && hi >= lo) {
        return invalid(format!("magnitude range [{lo}, {hi}] must satisfy 0 < lo <= hi"));
    }
    let terms: Vec<(Subset, f64)> = s
        .sets
        .iter()
        .map(|&set| {
            let mag = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (set, sign * mag)
        })
        .collect();
    FourierFunction::new(s.p, terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_matches_product_definition() {
        let s = Subset::from_indices(&[1, 3]).unwrap();
        for idx in 0..8usize {
            let z: Vec<f64> = (0..3).map(|b| if idx >> b & 1 == 1 { 1.0 } else { -1.0 }).collect();
            assert_eq!(s.chi(idx), z[0] * z[2]);
        }
    }

    #[test]
    fn text_round_trip() {
        let h = FourierFunction::from_terms(4, &[(&[], 0.25), (&[1], 1.0), (&[2, 4], -0.5)]).unwrap();
        let back = FourierFunction::from_text(&h.to_text()).unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn labels() {
        assert_eq!(Subset::from_indices(&[1, 2]).unwrap().label(), "c_1_2");
        assert_eq!(Subset::EMPTY.label(), "c_0");
        assert_eq!(Subset::from_indices(&[2, 3]).unwrap().to_string(), "{2,3}");
    }
}
