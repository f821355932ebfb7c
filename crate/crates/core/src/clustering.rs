//! Bisecting k-means over correlation matrices and silhouette scoring.
//!
//! Objects are square matrices compared under the Frobenius (element-wise
//! Euclidean) distance. Each bisection runs a seeded two-means with several
//! restarts and keeps the split with the smallest within-cluster sum of
//! squared distances. The cluster chosen for the next bisection is the one
//! with the largest average distance of its members to its centroid.

use std::ops::RangeInclusive;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::stats::{self, Summary};

pub fn matrix_distance(a: &SquareMatrix, b: &SquareMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(a.squared_distance(b).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterParams {
    pub seed: u64,
    /// Seeded two-means runs per bisection; the lowest-SSE run wins.
    pub restarts: usize,
    /// Safety cap on Lloyd iterations per run.
    pub max_iterations: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 16,
            max_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPartition {
    /// 0 or 1 per object.
    pub assignment: Vec<usize>,
    pub centroids: [SquareMatrix; 2],
    /// Within-cluster sum of squared distances to the centroids.
    pub sse: f64,
}

fn centroid_of(objects: &[&SquareMatrix], assignment: &[usize], cluster: usize) -> Option<SquareMatrix> {
    SquareMatrix::mean_of(
        objects
            .iter()
            .zip(assignment)
            .filter(|(_, &a)| a == cluster)
            .map(|(o, _)| *o),
    )
}

fn sse_of(objects: &[&SquareMatrix], assignment: &[usize], centroids: &[SquareMatrix; 2]) -> f64 {
    objects
        .iter()
        .zip(assignment)
        .map(|(o, &a)| o.squared_distance(&centroids[a]))
        .sum()
}

/// Decode the `p`-th unordered pair `(i, j)`, `i < j`, in row-major order.
fn pair_at(n: usize, mut p: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - 1 - i;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
    }
    unreachable!("pair index out of range")
}

fn lloyd_two(objects: &[&SquareMatrix], init: (usize, usize), max_iterations: usize) -> TwoPartition {
    let n = objects.len();
    let mut centroids = [objects[init.0].clone(), objects[init.1].clone()];
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iterations {
        let mut changed = false;
        for (o, a) in objects.iter().zip(assignment.iter_mut()) {
            let d0 = o.squared_distance(&centroids[0]);
            let d1 = o.squared_distance(&centroids[1]);
            let nearest = usize::from(d1 < d0);
            if nearest != *a {
                *a = nearest;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut stop = false;
        for empty in 0..2 {
            if assignment.iter().all(|&a| a != empty) {
                // move the object farthest from the surviving centroid
                let survivor = &centroids[1 - empty];
                let (far, dist) = objects
                    .iter()
                    .map(|o| o.squared_distance(survivor))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, d)| if d > best.1 { (i, d) } else { best });
                assignment[far] = empty;
                // identical objects: any split is optimal and Lloyd would undo it
                stop = dist == 0.0;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if let Some(m) = centroid_of(objects, &assignment, c) {
                *centroid = m;
            }
        }
        if stop {
            break;
        }
    }
    if hartigan_two(objects, &mut assignment) {
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if let Some(m) = centroid_of(objects, &assignment, c) {
                *centroid = m;
            }
        }
    }
    let sse = sse_of(objects, &assignment, &centroids);
    TwoPartition {
        assignment,
        centroids,
        sse,
    }
}

/// Single-object moves that lower the SSE once the centroids follow the move
/// (Hartigan's criterion). Lloyd fixed points can still admit such moves;
/// returns whether anything moved.
fn hartigan_two(objects: &[&SquareMatrix], assignment: &mut [usize]) -> bool {
    let mut sizes = [0usize; 2];
    let mut sums = [vec![0.0; objects[0].as_slice().len()], vec![0.0; objects[0].as_slice().len()]];
    for (o, &a) in objects.iter().zip(assignment.iter()) {
        sizes[a] += 1;
        sums[a].iter_mut().zip(o.as_slice()).for_each(|(s, x)| *s += x);
    }
    let dist_to_mean = |o: &SquareMatrix, sum: &[f64], size: usize| -> f64 {
        o.as_slice()
            .iter()
            .zip(sum)
            .map(|(x, s)| {
                let d = x - s / size as f64;
                d * d
            })
            .sum()
    };
    let mut moved = false;
    for _ in 0..objects.len() * 4 {
        let mut changed = false;
        for (o, a) in objects.iter().zip(assignment.iter_mut()) {
            let (from, to) = (*a, 1 - *a);
            if sizes[from] < 2 {
                continue;
            }
            let (nf, nt) = (sizes[from] as f64, sizes[to] as f64);
            let loss = nf / (nf - 1.0) * dist_to_mean(o, &sums[from], sizes[from]);
            let gain = if sizes[to] == 0 {
                0.0
            } else {
                nt / (nt + 1.0) * dist_to_mean(o, &sums[to], sizes[to])
            };
            // relative margin keeps rounding noise from cycling
            if gain < loss * (1.0 - 1e-12) {
                sums[from].iter_mut().zip(o.as_slice()).for_each(|(s, x)| *s -= x);
                sums[to].iter_mut().zip(o.as_slice()).for_each(|(s, x)| *s += x);
                sizes[from] -= 1;
                sizes[to] += 1;
                *a = to;
                changed = true;
                moved = true;
            }
        }
        if !changed {
            break;
        }
    }
    moved
}

/// Two-means with `restarts` seeded runs, each started from a distinct pair of
/// objects; returns the run with the smallest SSE (earliest run on ties).
pub fn kmeans_two(objects: &[&SquareMatrix], seed: u64, restarts: usize, max_iterations: usize) -> Result<TwoPartition> {
    let n = objects.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "two-means needs at least 2 objects, got {n}"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be at least 1".into()));
    }
    let dim = objects[0].dim();
    if let Some(bad) = objects.iter().find(|o| o.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }
    let pairs = n * (n - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, pairs, restarts.min(pairs));
    let mut best: Option<TwoPartition> = None;
    for p in picks.iter() {
        let run = lloyd_two(objects, pair_at(n, p), max_iterations.max(1));
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// One bisection: node `parent` was split into `children`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Split {
    pub parent: usize,
    pub children: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Silhouettes {
    pub values: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSolution {
    /// Cluster label in `1..=N` per object.
    pub labels: Vec<usize>,
    /// `centroids[n - 1]` belongs to label `n`.
    pub centroids: Vec<SquareMatrix>,
    pub sizes: Vec<usize>,
    /// Average member-to-centroid distance per label.
    pub internal_distances: Vec<f64>,
    /// Splits in execution order. Node 0 is the root; every split creates two
    /// new nodes numbered consecutively.
    pub dendrogram: Vec<Split>,
    /// Dendrogram node of each final label.
    pub leaf_nodes: Vec<usize>,
    pub silhouettes: Option<Silhouettes>,
    pub seed: u64,
    pub restarts: usize,
}

impl ClusterSolution {
    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self, label: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == label)
            .map(|(i, _)| i)
    }

    /// Members of every dendrogram node, indexed by node id.
    pub fn node_members(&self) -> Vec<Vec<usize>> {
        let n_nodes = 1 + 2 * self.dendrogram.len();
        let mut parent_of = vec![None; n_nodes];
        for s in &self.dendrogram {
            for c in s.children {
                parent_of[c] = Some(s.parent);
            }
        }
        let mut members = vec![Vec::new(); n_nodes];
        for (obj, &label) in self.labels.iter().enumerate() {
            let mut node = Some(self.leaf_nodes[label - 1]);
            while let Some(n) = node {
                members[n].push(obj);
                node = parent_of[n];
            }
        }
        members
    }
}

fn average_distance_to(members: &[usize], objects: &[SquareMatrix], centroid: &SquareMatrix) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    members
        .iter()
        .map(|&i| objects[i].squared_distance(centroid).sqrt())
        .sum::<f64>()
        / members.len() as f64
}

struct Node {
    id: usize,
    members: Vec<usize>,
    centroid: SquareMatrix,
    internal_distance: f64,
}

impl Node {
    fn new(id: usize, members: Vec<usize>, objects: &[SquareMatrix]) -> Self {
        let centroid = SquareMatrix::mean_of(members.iter().map(|&i| &objects[i])).expect("non-empty node");
        let internal_distance = average_distance_to(&members, objects, &centroid);
        Self {
            id,
            members,
            centroid,
            internal_distance,
        }
    }
}

/// Divisive clustering into `n_clusters` groups.
///
/// With `wind` (one value per object) the final labels are ordered by
/// ascending mean wind of their members, otherwise by their smallest member
/// index.
pub fn bisecting_kmeans(
    objects: &[SquareMatrix],
    n_clusters: usize,
    params: &ClusterParams,
    wind: Option<&[f64]>,
) -> Result<ClusterSolution> {
    bisect(objects, n_clusters, params, wind, true)
}

fn bisect(
    objects: &[SquareMatrix],
    n_clusters: usize,
    params: &ClusterParams,
    wind: Option<&[f64]>,
    score: bool,
) -> Result<ClusterSolution> {
    if objects.is_empty() {
        return Err(Error::EmptyInput("no matrices to cluster".into()));
    }
    if n_clusters < 1 || n_clusters > objects.len() {
        return Err(Error::InvalidParameter(format!(
            "cluster count {n_clusters} outside 1..={}",
            objects.len()
        )));
    }
    if let Some(w) = wind {
        if w.len() != objects.len() {
            return Err(Error::DimensionMismatch {
                expected: objects.len(),
                actual: w.len(),
            });
        }
    }
    let dim = objects[0].dim();
    if let Some(bad) = objects.iter().find(|o| o.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }

    let mut leaves = vec![Node::new(0, (0..objects.len()).collect(), objects)];
    let mut dendrogram = Vec::new();
    let mut next_id = 1;
    while leaves.len() < n_clusters {
        // largest internal distance; ties and zero spread fall back to the lowest node id
        let target = leaves
            .iter()
            .enumerate()
            .filter(|(_, l)| l.members.len() >= 2)
            .fold(None::<(usize, &Node)>, |best, (pos, l)| match best {
                Some((_, b)) if l.internal_distance > b.internal_distance => Some((pos, l)),
                Some((_, b)) if l.internal_distance == b.internal_distance && l.id < b.id => Some((pos, l)),
                None => Some((pos, l)),
                keep => keep,
            })
            .map(|(pos, _)| pos)
            .expect("a splittable cluster exists while fewer clusters than objects");
        let parent = leaves.remove(target);
        let refs: Vec<&SquareMatrix> = parent.members.iter().map(|&i| &objects[i]).collect();
        let split_seed = params.seed.wrapping_add((dendrogram.len() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let part = kmeans_two(&refs, split_seed, params.restarts, params.max_iterations)?;
        let mut halves = [Vec::new(), Vec::new()];
        for (&obj, &a) in parent.members.iter().zip(&part.assignment) {
            halves[a].push(obj);
        }
        let [a, b] = halves;
        let children = [next_id, next_id + 1];
        next_id += 2;
        dendrogram.push(Split {
            parent: parent.id,
            children,
        });
        leaves.push(Node::new(children[0], a, objects));
        leaves.push(Node::new(children[1], b, objects));
        leaves.sort_by_key(|l| l.id);
    }

    let order_key = |l: &Node| -> (f64, usize) {
        let first = l.members[0];
        match wind {
            Some(w) => (
                l.members.iter().map(|&i| w[i]).sum::<f64>() / l.members.len() as f64,
                first,
            ),
            None => (first as f64, first),
        }
    };
    leaves.sort_by(|a, b| {
        let (ka, kb) = (order_key(a), order_key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
    });

    let mut labels = vec![0; objects.len()];
    for (pos, leaf) in leaves.iter().enumerate() {
        for &m in &leaf.members {
            labels[m] = pos + 1;
        }
    }
    let silhouettes = if score && n_clusters >= 2 {
        Some(silhouette(&labels, objects)?)
    } else {
        None
    };
    Ok(ClusterSolution {
        sizes: leaves.iter().map(|l| l.members.len()).collect(),
        internal_distances: leaves.iter().map(|l| l.internal_distance).collect(),
        leaf_nodes: leaves.iter().map(|l| l.id).collect(),
        centroids: leaves.into_iter().map(|l| l.centroid).collect(),
        labels,
        dendrogram,
        silhouettes,
        seed: params.seed,
        restarts: params.restarts,
    })
}

/// Full pairwise distance matrix, row-major `n × n`.
pub fn distance_matrix(objects: &[SquareMatrix]) -> Vec<f64> {
    let n = objects.len();
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, d) in row.iter_mut().enumerate() {
            *d = objects[i].squared_distance(&objects[j]).sqrt();
        }
    });
    out
}

/// Silhouette coefficients from a precomputed distance matrix. Labels may be
/// any integers; singleton members score 0.
pub fn silhouette_from_distances(labels: &[usize], distances: &[f64]) -> Result<Silhouettes> {
    let n = labels.len();
    if distances.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            actual: distances.len(),
        });
    }
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::SilhouetteUndefined);
    }
    let slot: Vec<usize> = labels.iter().map(|l| ids.binary_search(l).unwrap()).collect();
    let mut sizes = vec![0usize; ids.len()];
    for &s in &slot {
        sizes[s] += 1;
    }
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = slot[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; ids.len()];
            for (j, &sj) in slot.iter().enumerate() {
                sums[sj] += distances[i * n + j];
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..ids.len())
                .filter(|&m| m != own)
                .map(|m| sums[m] / sizes[m] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                ((b - a) / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    Ok(Silhouettes { values, mean })
}

pub fn silhouette(labels: &[usize], objects: &[SquareMatrix]) -> Result<Silhouettes> {
    if labels.len() != objects.len() {
        return Err(Error::DimensionMismatch {
            expected: objects.len(),
            actual: labels.len(),
        });
    }
    silhouette_from_distances(labels, &distance_matrix(objects))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SilhouetteRow {
    pub n_clusters: usize,
    #[serde(flatten)]
    pub summary: Summary,
}

/// Descriptive statistics of the silhouettes of one bisecting solution per
/// cluster count in `n_range`.
pub fn silhouette_table(
    objects: &[SquareMatrix],
    n_range: RangeInclusive<usize>,
    params: &ClusterParams,
    wind: Option<&[f64]>,
) -> Result<Vec<SilhouetteRow>> {
    if *n_range.start() < 2 || *n_range.end() > objects.len() || n_range.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "cluster range {}..={} must lie within 2..={}",
            n_range.start(),
            n_range.end(),
            objects.len()
        )));
    }
    let distances = distance_matrix(objects);
    n_range
        .map(|n| {
            let sol = bisect(objects, n, params, wind, false)?;
            let sil = silhouette_from_distances(&sol.labels, &distances)?;
            let summary = stats::describe(&sil.values).expect("non-empty");
            Ok(SilhouetteRow {
                n_clusters: n,
                summary,
            })
        })
        .collect()
}
