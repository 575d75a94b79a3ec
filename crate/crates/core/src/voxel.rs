//! Gravity-constrained voxel reconstruction from a top-down projection.
//!
//! Under gravity every column is a bottom-anchored prefix, so a stack is
//! fully described by its column heights and the admissible set for a
//! projection is the product of heights `1..=k` over the occupied columns.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, ParseError, Result};

/// Largest admissible set the enumerator materializes by default.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000;

/// Binary `m × m` top-down occupancy map.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Projection {
    m: usize,
    cells: Vec<bool>,
}

impl Projection {
    pub fn new(rows: Vec<Vec<bool>>) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: format!("{m} columns per row"),
                actual: format!("{:?}", rows.iter().map(Vec::len).collect::<Vec<_>>()),
            });
        }
        Ok(Self {
            m,
            cells: rows.into_iter().flatten().collect(),
        })
    }

    pub fn empty(m: usize) -> Self {
        Self {
            m,
            cells: vec![false; m * m],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.m + j]
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        self.cells
            .chunks(self.m.max(1))
            .map(<[bool]>::to_vec)
            .collect()
    }

    /// Occupied columns in row-major order.
    pub fn occupied(&self) -> Vec<(usize, usize)> {
        (0..self.m)
            .flat_map(|i| (0..self.m).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j))
            .collect()
    }
}

/// A `k × m × m` binary tensor; layer 0 is the bottom.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VoxelStack {
    k: usize,
    m: usize,
    cells: Vec<bool>,
}

impl VoxelStack {
    pub fn empty(k: usize, m: usize) -> Self {
        Self {
            k,
            m,
            cells: vec![false; k * m * m],
        }
    }

    /// Builds a stack from explicit layers, bottom first.
    pub fn from_layers(layers: Vec<Vec<Vec<bool>>>) -> Result<Self> {
        let k = layers.len();
        let m = layers.first().map_or(0, Vec::len);
        for layer in &layers {
            if layer.len() != m || layer.iter().any(|r| r.len() != m) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{m}×{m} layers"),
                    actual: "ragged layer".to_string(),
                });
            }
        }
        Ok(Self {
            k,
            m,
            cells: layers.into_iter().flatten().flatten().collect(),
        })
    }

    /// Builds a gravity-respecting stack from per-column heights.
    pub fn from_heights(k: usize, heights: &[Vec<usize>]) -> Result<Self> {
        let m = heights.len();
        let mut stack = Self::empty(k, m);
        for (i, row) in heights.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: format!("{m} heights per row"),
                    actual: row.len().to_string(),
                });
            }
            for (j, &h) in row.iter().enumerate() {
                if h > k {
                    return Err(Error::InvalidParameters(format!(
                        "column ({i},{j}) height {h} exceeds budget {k}"
                    )));
                }
                for layer in 0..h {
                    stack.set(layer, i, j, true);
                }
            }
        }
        Ok(stack)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    fn index(&self, layer: usize, i: usize, j: usize) -> usize {
        (layer * self.m + i) * self.m + j
    }

    pub fn get(&self, layer: usize, i: usize, j: usize) -> bool {
        self.cells[self.index(layer, i, j)]
    }

    pub fn set(&mut self, layer: usize, i: usize, j: usize, value: bool) {
        let idx = self.index(layer, i, j);
        self.cells[idx] = value;
    }

    /// Column heights, or `None` when some column has a floating voxel.
    pub fn heights(&self) -> Option<Vec<Vec<usize>>> {
        check_gravity(self).then(|| {
            (0..self.m)
                .map(|i| {
                    (0..self.m)
                        .map(|j| (0..self.k).take_while(|&l| self.get(l, i, j)).count())
                        .collect()
                })
                .collect()
        })
    }

    /// Pads with empty layers up to height `k`. Returns `None` if the stack
    /// is already taller.
    pub fn padded_to(&self, k: usize) -> Option<Self> {
        if self.k > k {
            return None;
        }
        let mut cells = self.cells.clone();
        cells.resize(k * self.m * self.m, false);
        Some(Self {
            k,
            m: self.m,
            cells,
        })
    }

    /// Hypothesis text: `LAYERS:` then one block of rows per layer, bottom
    /// layer first, blocks separated by blank lines.
    pub fn to_text(&self) -> String {
        let mut out = String::from("LAYERS:");
        for layer in 0..self.k {
            if layer > 0 {
                out.push('\n');
            }
            for i in 0..self.m {
                out.push('\n');
                for j in 0..self.m {
                    out.push(if self.get(layer, i, j) { '1' } else { '0' });
                }
            }
        }
        out
    }
}

/// OR over layers of every column.
pub fn project(stack: &VoxelStack) -> Projection {
    let m = stack.m;
    let cells = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| (0..stack.k).any(|l| stack.get(l, i, j)))
        .collect();
    Projection { m, cells }
}

/// True iff every column's occupancy is a bottom-anchored prefix.
pub fn check_gravity(stack: &VoxelStack) -> bool {
    (0..stack.m).all(|i| {
        (0..stack.m).all(|j| (1..stack.k).all(|l| !stack.get(l, i, j) || stack.get(l - 1, i, j)))
    })
}

pub fn validate_stack(stack: &VoxelStack, projection: &Projection) -> Result<bool> {
    if stack.m != projection.m {
        return Err(Error::DimensionMismatch {
            expected: format!("grid side {}", projection.m),
            actual: format!("grid side {}", stack.m),
        });
    }
    Ok(check_gravity(stack) && project(stack) == *projection)
}

/// `k` raised to the number of occupied columns.
pub fn count_admissible(projection: &Projection, k: usize) -> Result<u64> {
    if k == 0 {
        return Err(Error::InvalidParameters(
            "height budget must be >= 1".into(),
        ));
    }
    let occupied = u32::try_from(projection.occupied().len()).map_err(|_| Error::Overflow)?;
    (k as u64).checked_pow(occupied).ok_or(Error::Overflow)
}

/// Canonical form: rows of `0`/`1` joined by `|`, layers (bottom first)
/// joined by `/`.
pub fn canon_stack(stack: &VoxelStack) -> String {
    let mut out = String::with_capacity(stack.cells.len() + stack.k * stack.m);
    for layer in 0..stack.k {
        if layer > 0 {
            out.push('/');
        }
        for i in 0..stack.m {
            if i > 0 {
                out.push('|');
            }
            for j in 0..stack.m {
                let _ = write!(out, "{}", u8::from(stack.get(layer, i, j)));
            }
        }
    }
    out
}

/// Parses layer text. Accepts the `LAYERS:` block format, where layers are
/// separated by blank lines, as well as the compact canonical form (rows
/// separated by `|`, layers by `/`). Whitespace inside a row is ignored.
pub fn parse_stack(text: &str) -> std::result::Result<VoxelStack, ParseError> {
    let trimmed = text.trim_start();
    let body = trimmed.strip_prefix("LAYERS:").ok_or_else(|| {
        ParseError::new(text.len() - trimmed.len() + 1, "expected `LAYERS:` header")
    })?;
    parse_layers(body, text.len() - body.len())
}

/// Parses the compact canonical form produced by [`canon_stack`].
pub fn parse_canonical(text: &str) -> std::result::Result<VoxelStack, ParseError> {
    parse_layers(text, 0)
}

fn parse_layers(body: &str, offset: usize) -> std::result::Result<VoxelStack, ParseError> {
    let mut layers: Vec<Vec<Vec<bool>>> = Vec::new();
    let mut current: Vec<Vec<bool>> = Vec::new();
    let mut pos = offset;
    let flush = |current: &mut Vec<Vec<bool>>, layers: &mut Vec<Vec<Vec<bool>>>| {
        if !current.is_empty() {
            layers.push(std::mem::take(current));
        }
    };
    for line in body.split('\n') {
        let line_start = pos;
        pos += line.len() + 1;
        if line.trim().is_empty() {
            flush(&mut current, &mut layers);
            continue;
        }
        let mut col = line_start;
        for (li, layer_part) in line.split('/').enumerate() {
            if li > 0 {
                flush(&mut current, &mut layers);
            }
            for row in layer_part.split('|') {
                let mut cells = Vec::new();
                for (ci, c) in row.char_indices() {
                    match c {
                        '0' => cells.push(false),
                        '1' => cells.push(true),
                        c if c.is_whitespace() => {}
                        other => {
                            return Err(ParseError::new(
                                col + ci + 1,
                                format!("unexpected character `{other}` in layer row"),
                            ))
                        }
                    }
                }
                if cells.is_empty() {
                    return Err(ParseError::new(col + 1, "empty layer row"));
                }
                current.push(cells);
                col += row.len() + 1;
            }
        }
    }
    flush(&mut current, &mut layers);

    if layers.is_empty() {
        return Err(ParseError::new(offset + 1, "no layers"));
    }
    let m = layers[0].len();
    for (l, layer) in layers.iter().enumerate() {
        if layer.len() != m || layer.iter().any(|r| r.len() != m) {
            return Err(ParseError::new(
                offset + 1,
                format!("layer {} is not {m}×{m}", l + 1),
            ));
        }
    }
    VoxelStack::from_layers(layers).map_err(|e| ParseError::new(offset + 1, e.to_string()))
}

/// Lazily enumerates every admissible stack for a projection.
///
/// Columns are visited in row-major order and heights ascend; the first
/// occupied column is the most significant digit.
#[derive(Debug, Clone)]
pub struct StackEnumerator {
    k: usize,
    m: usize,
    occupied: Vec<(usize, usize)>,
    digits: Vec<usize>,
    done: bool,
}

impl StackEnumerator {
    fn new(projection: &Projection, k: usize) -> Self {
        let occupied = projection.occupied();
        Self {
            k,
            m: projection.m,
            digits: vec![1; occupied.len()],
            occupied,
            done: false,
        }
    }

    fn build(&self, digits: &[usize]) -> VoxelStack {
        let mut stack = VoxelStack::empty(self.k, self.m);
        for (&(i, j), &h) in self.occupied.iter().zip(digits) {
            for layer in 0..h {
                stack.set(layer, i, j, true);
            }
        }
        stack
    }
}

impl Iterator for StackEnumerator {
    type Item = VoxelStack;

    fn next(&mut self) -> Option<VoxelStack> {
        if self.done {
            return None;
        }
        let item = self.build(&self.digits);
        let mut pos = self.digits.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            if self.digits[pos] < self.k {
                self.digits[pos] += 1;
                break;
            }
            self.digits[pos] = 1;
        }
        Some(item)
    }
}

/// Enumerates the admissible set, refusing when it exceeds `cap`.
pub fn enumerate_admissible_stacks(
    projection: &Projection,
    k: usize,
    cap: u64,
) -> Result<StackEnumerator> {
    let count = count_admissible(projection, k)?;
    if count > cap {
        return Err(Error::LimitExceeded(format!(
            "{count} admissible stacks exceeds the cap of {cap}"
        )));
    }
    Ok(StackEnumerator::new(projection, k))
}

/// The `index`-th stack in enumeration order, without materializing the
/// preceding ones.
pub fn nth_admissible(projection: &Projection, k: usize, index: u64) -> Result<VoxelStack> {
    let count = count_admissible(projection, k)?;
    if index >= count {
        return Err(Error::InvalidParameters(format!(
            "index {index} outside admissible set of size {count}"
        )));
    }
    let e = StackEnumerator::new(projection, k);
    let mut digits = vec![1; e.occupied.len()];
    let mut rest = index;
    for d in digits.iter_mut().rev() {
        *d = (rest % k as u64) as usize + 1;
        rest /= k as u64;
    }
    Ok(e.build(&digits))
}

/// A voxel task instance. The admissible set is counted, and materialized
/// on demand through [`enumerate_admissible_stacks`].
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelInstance {
    pub projection: Projection,
    pub k: usize,
    pub count: u64,
}

impl VoxelInstance {
    pub fn new(projection: Projection, k: usize) -> Result<Self> {
        let count = count_admissible(&projection, k)?;
        Ok(Self {
            projection,
            k,
            count,
        })
    }
}

/// Places `occupied` columns uniformly at random on an `m × m` grid.
pub fn generate_voxel_instance(
    m: usize,
    k: usize,
    occupied: usize,
    seed: u64,
) -> Result<VoxelInstance> {
    if occupied > m * m {
        return Err(Error::InvalidParameters(format!(
            "{occupied} occupied columns do not fit on a {m}×{m} grid"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut projection = Projection::empty(m);
    for idx in rand::seq::index::sample(&mut rng, m * m, occupied) {
        projection.cells[idx] = true;
    }
    VoxelInstance::new(projection, k)
}

/// Uniform draw from the admissible set.
pub fn random_admissible<R: Rng + ?Sized>(
    projection: &Projection,
    k: usize,
    rng: &mut R,
) -> VoxelStack {
    let e = StackEnumerator::new(projection, k);
    let digits: Vec<usize> = e.occupied.iter().map(|_| rng.random_range(1..=k)).collect();
    e.build(&digits)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn proj(rows: &[&[u8]]) -> Projection {
        Projection::new(
            rows.iter()
                .map(|r| r.iter().map(|&c| c == 1).collect())
                .collect(),
        )
        .unwrap()
    }

    fn stack(k: usize, heights: &[&[usize]]) -> VoxelStack {
        VoxelStack::from_heights(k, &heights.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .unwrap()
    }

    /// Every tensor in {0,1}^(k×m×m) that passes validation.
    fn brute_force(projection: &Projection, k: usize) -> BTreeSet<String> {
        let m = projection.m();
        let cells = k * m * m;
        (0u64..1 << cells)
            .map(|bits| {
                let mut s = VoxelStack::empty(k, m);
                for (idx, c) in s.cells.iter_mut().enumerate() {
                    *c = bits & (1 << idx) != 0;
                }
                s
            })
            .filter(|s| validate_stack(s, projection).unwrap())
            .map(|s| canon_stack(&s))
            .collect()
    }

    #[test]
    fn project_examples() {
        assert_eq!(
            project(&stack(3, &[&[2, 0], &[1, 3]])),
            proj(&[&[1, 0], &[1, 1]])
        );
        assert_eq!(project(&VoxelStack::empty(3, 2)), Projection::empty(2));
        assert_eq!(
            project(&stack(2, &[&[2, 2], &[2, 2]])),
            proj(&[&[1, 1], &[1, 1]])
        );
    }

    #[test]
    fn gravity_examples() {
        let mut s = VoxelStack::empty(3, 1);
        s.set(0, 0, 0, true);
        s.set(1, 0, 0, true);
        assert!(check_gravity(&s));
        let mut floating = VoxelStack::empty(3, 1);
        floating.set(0, 0, 0, true);
        floating.set(2, 0, 0, true);
        assert!(!check_gravity(&floating));
        assert!(check_gravity(&VoxelStack::empty(3, 2)));
    }

    #[test]
    fn validate_examples() {
        let v = proj(&[&[1, 0], &[0, 1]]);
        assert!(validate_stack(&stack(2, &[&[1, 0], &[0, 2]]), &v).unwrap());
        assert!(!validate_stack(&stack(2, &[&[0, 0], &[0, 1]]), &v).unwrap());
        let mut floating = stack(2, &[&[1, 0], &[0, 0]]);
        floating.set(1, 1, 1, true);
        assert!(!validate_stack(&floating, &project(&floating)).unwrap());
        assert!(validate_stack(&VoxelStack::empty(2, 3), &v).is_err());
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_admissible(&Projection::empty(3), 5).unwrap(), 1);
        assert_eq!(
            count_admissible(&proj(&[&[1, 1, 1], &[0, 0, 0], &[0, 0, 0]]), 3).unwrap(),
            27
        );
        let two = proj(&[&[1, 0], &[0, 1]]);
        assert_eq!(count_admissible(&two, 2).unwrap(), 4);
        assert_eq!(brute_force(&two, 2).len(), 4);
        assert!(count_admissible(&two, 0).is_err());
        let full = Projection::new(vec![vec![true; 9]; 9]).unwrap();
        assert!(matches!(count_admissible(&full, 3), Err(Error::Overflow)));
    }

    #[test]
    fn enumerate_examples() {
        let one: Vec<_> = enumerate_admissible_stacks(&proj(&[&[1]]), 3, 100)
            .unwrap()
            .collect();
        assert_eq!(one.len(), 3);
        let heights: Vec<_> = one.iter().map(|s| s.heights().unwrap()[0][0]).collect();
        assert_eq!(heights, vec![1, 2, 3]);

        let row = proj(&[&[1, 1], &[0, 0]]);
        let got: BTreeSet<_> = enumerate_admissible_stacks(&row, 2, 100)
            .unwrap()
            .map(|s| canon_stack(&s))
            .collect();
        assert_eq!(got.len(), 4);
        assert_eq!(got, brute_force(&row, 2));

        assert!(matches!(
            enumerate_admissible_stacks(&proj(&[&[1, 1], &[1, 1]]), 3, 80),
            Err(Error::LimitExceeded(_))
        ));
    }

    #[test]
    fn enumeration_matches_brute_force_on_small_grids() {
        for m in 1..=2usize {
            for k in 1..=3usize {
                for mask in 0u32..1 << (m * m) {
                    let rows = (0..m)
                        .map(|i| (0..m).map(|j| mask & (1 << (i * m + j)) != 0).collect())
                        .collect();
                    let p = Projection::new(rows).unwrap();
                    let got: Vec<String> = enumerate_admissible_stacks(&p, k, u64::MAX)
                        .unwrap()
                        .map(|s| canon_stack(&s))
                        .collect();
                    let unique: BTreeSet<String> = got.iter().cloned().collect();
                    assert_eq!(unique.len(), got.len());
                    assert_eq!(got.len() as u64, count_admissible(&p, k).unwrap());
                    assert_eq!(unique, brute_force(&p, k), "m={m} k={k} mask={mask:b}");
                }
            }
        }
    }

    #[test]
    fn nth_matches_iteration_order() {
        let p = proj(&[&[1, 0, 1], &[0, 1, 0], &[0, 0, 0]]);
        for (i, s) in enumerate_admissible_stacks(&p, 3, 100).unwrap().enumerate() {
            assert_eq!(nth_admissible(&p, 3, i as u64).unwrap(), s);
        }
        assert!(nth_admissible(&p, 3, 27).is_err());
    }

    #[test]
    fn canonical_and_text_round_trip() {
        let s = stack(3, &[&[2, 0], &[1, 3]]);
        assert_eq!(canon_stack(&s), "10|11/10|01/00|01");
        assert_eq!(parse_canonical(&canon_stack(&s)).unwrap(), s);
        assert_eq!(parse_stack(&s.to_text()).unwrap(), s);
        let t = stack(3, &[&[2, 0], &[1, 2]]);
        assert_ne!(canon_stack(&s), canon_stack(&t));
    }

    #[test]
    fn parse_errors() {
        assert!(parse_stack("10\n01").is_err());
        assert!(parse_stack("LAYERS:\n").is_err());
        assert!(parse_stack("LAYERS:\n10\n0x").is_err());
        assert!(parse_stack("LAYERS:\n10\n01\n\n1\n").is_err());
        assert!(parse_stack("LAYERS:\n101\n01").is_err());
        let spaced = parse_stack("LAYERS:\n1 0\n0 1\n\n0 0\n0 1\n").unwrap();
        assert_eq!(spaced.k(), 2);
    }

    #[test]
    fn generated_instances() {
        let inst = generate_voxel_instance(3, 3, 3, 1).unwrap();
        assert_eq!(inst.count, 27);
        assert_eq!(inst, generate_voxel_instance(3, 3, 3, 1).unwrap());
        let empty = generate_voxel_instance(3, 3, 0, 1).unwrap();
        assert_eq!(empty.count, 1);
        assert_eq!(
            enumerate_admissible_stacks(&empty.projection, 3, 1)
                .unwrap()
                .count(),
            1
        );
        assert!(generate_voxel_instance(2, 3, 5, 1).is_err());
    }

    #[test]
    fn random_draws_are_admissible() {
        let p = proj(&[&[1, 0], &[1, 1]]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert!(validate_stack(&random_admissible(&p, 3, &mut rng), &p).unwrap());
        }
    }
}
