//! Mini-batch assembly.
//!
//! Pairs and triplets can only reference descriptors that live in the same
//! batch, so assembly has to place every referenced sample in the batch
//! itself: each training sample arrives together with its closest-pose
//! template, hard negatives when bootstrapping is active, and enough extra
//! templates that every object present ends up with at least two.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::{PairRef, TripletRef};
use crate::scene::{pose_angle, Pose, SymmetryClass};

/// Index into one of the two sample pools.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoolRef {
    Template(usize),
    Training(usize),
}

/// Pose and class metadata for the training pool. Images are carried
/// separately (assembly and its invariants only need poses).
#[derive(Clone, Debug)]
pub struct PoolMeta {
    pub n_classes: usize,
    pub symmetries: Vec<SymmetryClass>,
    /// (classId, pose) per template, in database order.
    pub templates: Vec<(usize, Pose)>,
    /// (classId, pose) per training sample.
    pub training: Vec<(usize, Pose)>,
    /// Per training sample: (template index, pose angle) of its closest-pose
    /// same-class template; ties broken by lower template index.
    closest: Vec<(usize, f64)>,
}

impl PoolMeta {
    pub fn new(
        n_classes: usize,
        symmetries: Vec<SymmetryClass>,
        templates: Vec<(usize, Pose)>,
        training: Vec<(usize, Pose)>,
    ) -> Result<Self> {
        if symmetries.len() != n_classes {
            return Err(Error::InvalidArgument(
                "one symmetry class per object required".into(),
            ));
        }
        let mut tpl_count = vec![0usize; n_classes];
        for &(c, _) in &templates {
            *tpl_count
                .get_mut(c)
                .ok_or_else(|| Error::InvalidArgument(format!("template class {} out of range", c)))? += 1;
        }
        if tpl_count.iter().any(|&c| c < 2) {
            return Err(Error::InvalidArgument(
                "every object needs at least two templates".into(),
            ));
        }
        for &(c, _) in &training {
            if c >= n_classes {
                return Err(Error::InvalidArgument(format!(
                    "training class {} out of range",
                    c
                )));
            }
        }
        let mut pool = PoolMeta {
            n_classes,
            symmetries,
            templates,
            training,
            closest: Vec::new(),
        };
        pool.closest = (0..pool.training.len())
            .map(|i| pool.scan_closest_template(i))
            .collect();
        Ok(pool)
    }

    fn angle(&self, class: usize, a: &Pose, b: &Pose) -> f64 {
        pose_angle(a, b, self.symmetries[class])
    }

    fn scan_closest_template(&self, training_idx: usize) -> (usize, f64) {
        let (class, ref pose) = self.training[training_idx];
        let mut best: Option<(f64, usize)> = None;
        for (t, &(tc, ref tp)) in self.templates.iter().enumerate() {
            if tc != class {
                continue;
            }
            let a = self.angle(class, pose, tp);
            if best.map_or(true, |(ba, bt)| a < ba || (a == ba && t < bt)) {
                best = Some((a, t));
            }
        }
        let (a, t) = best.expect("validated: every class has templates");
        (t, a)
    }

    /// Closest-pose template (index, angle) for a training sample.
    pub fn closest_template(&self, training_idx: usize) -> (usize, f64) {
        self.closest[training_idx]
    }

    pub fn class_of(&self, r: PoolRef) -> usize {
        match r {
            PoolRef::Template(i) => self.templates[i].0,
            PoolRef::Training(i) => self.training[i].0,
        }
    }

    pub fn pose_of(&self, r: PoolRef) -> &Pose {
        match r {
            PoolRef::Template(i) => &self.templates[i].1,
            PoolRef::Training(i) => &self.training[i].1,
        }
    }
}

/// Hardest negatives per training sample under the current network, found by
/// exhaustive search over the full template set.
#[derive(Clone, Debug)]
pub struct HardNegatives {
    /// Nearest same-class template with strictly worse pose than the closest.
    pub same_class: Vec<Option<usize>>,
    /// Nearest template of any other class.
    pub other_class: Vec<Option<usize>>,
}

fn euclid(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Scans current descriptors for the hardest eligible negatives.
/// A same-class candidate must sit at a strictly larger pose angle than the
/// closest-pose template, so a triplet built from it stays well ordered.
pub fn compute_hard_negatives(
    meta: &PoolMeta,
    template_descriptors: &[Vec<f32>],
    training_descriptors: &[Vec<f32>],
) -> Result<HardNegatives> {
    if template_descriptors.len() != meta.templates.len()
        || training_descriptors.len() != meta.training.len()
    {
        return Err(Error::InvalidArgument(
            "descriptor count does not match pool".into(),
        ));
    }
    let mut same_class = Vec::with_capacity(meta.training.len());
    let mut other_class = Vec::with_capacity(meta.training.len());
    for (i, desc) in training_descriptors.iter().enumerate() {
        let (class, ref pose) = meta.training[i];
        let (_, closest_angle) = meta.closest[i];
        let mut best_same: Option<(f64, usize)> = None;
        let mut best_other: Option<(f64, usize)> = None;
        for (t, tdesc) in template_descriptors.iter().enumerate() {
            let (tc, ref tp) = meta.templates[t];
            let d = euclid(desc, tdesc);
            if tc == class {
                if meta.angle(class, pose, tp) > closest_angle {
                    if best_same.map_or(true, |(bd, bt)| d < bd || (d == bd && t < bt)) {
                        best_same = Some((d, t));
                    }
                }
            } else if best_other.map_or(true, |(bd, bt)| d < bd || (d == bd && t < bt)) {
                best_other = Some((d, t));
            }
        }
        same_class.push(best_same.map(|(_, t)| t));
        other_class.push(best_other.map(|(_, t)| t));
    }
    Ok(HardNegatives {
        same_class,
        other_class,
    })
}

#[derive(Clone, Debug)]
pub struct MiniBatch {
    pub members: Vec<PoolRef>,
    /// Member indices of the training (non-template) samples.
    pub anchors: Vec<usize>,
    pub pairs: Vec<PairRef>,
    pub triplets: Vec<TripletRef>,
}

impl MiniBatch {
    pub fn template_flags(&self) -> Vec<bool> {
        self.members
            .iter()
            .map(|r| matches!(r, PoolRef::Template(_)))
            .collect()
    }

    /// Checks every structural batch invariant; used by tests and debug runs.
    pub fn validate(&self, meta: &PoolMeta) -> Result<()> {
        let mut seen = HashSet::new();
        for &m in &self.members {
            if !seen.insert(m) {
                return Err(Error::InvalidArgument("duplicate batch member".into()));
            }
        }
        let mut tpl_per_class = vec![0usize; meta.n_classes];
        let mut class_present = vec![false; meta.n_classes];
        for &m in &self.members {
            class_present[meta.class_of(m)] = true;
            if let PoolRef::Template(_) = m {
                tpl_per_class[meta.class_of(m)] += 1;
            }
        }
        for c in 0..meta.n_classes {
            if class_present[c] && tpl_per_class[c] < 2 {
                return Err(Error::InvalidArgument(format!(
                    "object {} present with fewer than two templates",
                    c
                )));
            }
        }
        for &a in &self.anchors {
            let PoolRef::Training(idx) = self.members[a] else {
                return Err(Error::InvalidArgument("anchor is not a training sample".into()));
            };
            let (tpl, _) = meta.closest[idx];
            if !self.members.contains(&PoolRef::Template(tpl)) {
                return Err(Error::InvalidArgument(
                    "closest-pose template missing from batch".into(),
                ));
            }
        }
        if self.pairs.len() != self.anchors.len() {
            return Err(Error::InvalidArgument("expected one pair per anchor".into()));
        }
        for p in &self.pairs {
            let (ci, pi) = member_class_pose(meta, self, p.i)?;
            let (cj, _) = member_class_pose(meta, self, p.j)?;
            if ci != cj {
                return Err(Error::InvalidArgument("pair crosses classes".into()));
            }
            // Partner must realize the minimum pose angle among in-batch
            // same-class templates.
            let got = pose_angle(pi, member_class_pose(meta, self, p.j)?.1, meta.symmetries[ci]);
            for (m, &r) in self.members.iter().enumerate() {
                if let PoolRef::Template(_) = r {
                    if meta.class_of(r) == ci {
                        let a = pose_angle(pi, meta.pose_of(r), meta.symmetries[ci]);
                        if a < got && m != p.j {
                            return Err(Error::InvalidArgument(
                                "pair partner is not the closest in-batch template".into(),
                            ));
                        }
                    }
                }
            }
        }
        for t in &self.triplets {
            let (ci, pi) = member_class_pose(meta, self, t.anchor)?;
            let (cj, pj) = member_class_pose(meta, self, t.similar)?;
            let (ck, pk) = member_class_pose(meta, self, t.dissimilar)?;
            if ci != cj {
                return Err(Error::InvalidArgument("similar sample crosses classes".into()));
            }
            if ci == ck {
                let sym = meta.symmetries[ci];
                if pose_angle(pi, pj, sym) >= pose_angle(pi, pk, sym) {
                    return Err(Error::InvalidArgument(
                        "same-class triplet is not pose ordered".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn member_class_pose<'a>(
    meta: &'a PoolMeta,
    batch: &MiniBatch,
    member: usize,
) -> Result<(usize, &'a Pose)> {
    let r = *batch
        .members
        .get(member)
        .ok_or_else(|| Error::InvalidArgument("member index out of range".into()))?;
    Ok((meta.class_of(r), meta.pose_of(r)))
}

/// Internal growing batch state during assembly.
struct Builder<'a> {
    meta: &'a PoolMeta,
    members: Vec<PoolRef>,
    index: HashMap<PoolRef, usize>,
    tpl_per_class: Vec<usize>,
    anchors: Vec<usize>,
}

impl<'a> Builder<'a> {
    fn new(meta: &'a PoolMeta) -> Self {
        Builder {
            meta,
            members: Vec::new(),
            index: HashMap::new(),
            tpl_per_class: vec![0; meta.n_classes],
            anchors: Vec::new(),
        }
    }

    fn contains(&self, r: PoolRef) -> bool {
        self.index.contains_key(&r)
    }

    fn push(&mut self, r: PoolRef) -> usize {
        debug_assert!(!self.contains(r));
        let idx = self.members.len();
        self.members.push(r);
        self.index.insert(r, idx);
        match r {
            PoolRef::Template(_) => self.tpl_per_class[self.meta.class_of(r)] += 1,
            PoolRef::Training(_) => self.anchors.push(idx),
        }
        idx
    }

    /// Templates that a committed `plan` would force in on top of itself so
    /// every touched class keeps two templates in the batch. Returns None if
    /// some class cannot be topped up (all its templates already planned).
    fn topup_classes(&self, plan: &[PoolRef]) -> Vec<usize> {
        let mut tpl = self.tpl_per_class.clone();
        let mut touched: Vec<bool> = vec![false; self.meta.n_classes];
        for (c, &n) in tpl.iter().enumerate() {
            if n > 0 {
                touched[c] = true;
            }
        }
        for &r in &self.members {
            touched[self.meta.class_of(r)] = true;
        }
        for &r in plan {
            let c = self.meta.class_of(r);
            touched[c] = true;
            if let PoolRef::Template(_) = r {
                tpl[c] += 1;
            }
        }
        (0..self.meta.n_classes)
            .filter(|&c| touched[c] && tpl[c] < 2)
            .collect()
    }
}

/// Assembles one mini-batch, popping training samples from the per-class
/// `queues` round-robin until nothing more fits. Every committed insertion
/// keeps the batch invariants satisfiable within `batch_size`.
pub fn assemble_minibatch(
    meta: &PoolMeta,
    queues: &mut [Vec<usize>],
    batch_size: usize,
    hard: Option<&HardNegatives>,
    rng: &mut ChaCha8Rng,
) -> Result<MiniBatch> {
    if queues.len() != meta.n_classes {
        return Err(Error::InvalidArgument("one queue per class required".into()));
    }
    let mut b = Builder::new(meta);
    loop {
        let mut progressed = false;
        for c in 0..meta.n_classes {
            let Some(&t_idx) = queues[c].last() else { continue };
            let mut plan = vec![PoolRef::Training(t_idx)];
            let (closest_tpl, _) = meta.closest[t_idx];
            let want_template = |plan: &mut Vec<PoolRef>, tpl: usize, b: &Builder| {
                let r = PoolRef::Template(tpl);
                if !b.contains(r) && !plan.contains(&r) {
                    plan.push(r);
                }
            };
            want_template(&mut plan, closest_tpl, &b);
            if let Some(h) = hard {
                if let Some(t) = h.same_class[t_idx] {
                    want_template(&mut plan, t, &b);
                }
                if let Some(t) = h.other_class[t_idx] {
                    want_template(&mut plan, t, &b);
                }
            }
            let short_classes = b.topup_classes(&plan);
            if b.members.len() + plan.len() + short_classes.len() > batch_size {
                continue;
            }
            queues[c].pop();
            for r in plan.iter().copied() {
                b.push(r);
            }
            for sc in short_classes {
                // Pool validation guarantees >= 2 templates per class, so a
                // candidate exists whenever the class is short.
                let candidates: Vec<usize> = (0..meta.templates.len())
                    .filter(|&t| {
                        meta.templates[t].0 == sc && !b.contains(PoolRef::Template(t))
                    })
                    .collect();
                if candidates.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "object {} has too few distinct templates",
                        sc
                    )));
                }
                let pick = candidates[rng.random_range(0..candidates.len())];
                b.push(PoolRef::Template(pick));
            }
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    if b.anchors.is_empty() && queues.iter().any(|q| !q.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "batch size {} cannot hold one sample with its templates",
            batch_size
        )));
    }

    let anchors = b.anchors.clone();
    let pairs = build_pairs(meta, &b.members, &anchors);
    let mut triplets = build_initial_triplets(meta, &b.members, &anchors, &pairs, rng);
    if let Some(h) = hard {
        triplets.extend(bootstrap_triplets(meta, &b.members, &b.index, &anchors, &pairs, h));
    }
    Ok(MiniBatch {
        members: b.members,
        anchors,
        pairs,
        triplets,
    })
}

/// One pair per training sample: the in-batch same-class template at minimum
/// pose angle (ties broken by lower template pool index).
fn build_pairs(meta: &PoolMeta, members: &[PoolRef], anchors: &[usize]) -> Vec<PairRef> {
    anchors
        .iter()
        .map(|&a| {
            let PoolRef::Training(idx) = members[a] else { unreachable!() };
            let (class, ref pose) = meta.training[idx];
            let mut best: Option<(f64, usize, usize)> = None;
            for (m, &r) in members.iter().enumerate() {
                let PoolRef::Template(t) = r else { continue };
                if meta.templates[t].0 != class {
                    continue;
                }
                let angle = meta.angle(class, pose, &meta.templates[t].1);
                if best.map_or(true, |(ba, bt, _)| angle < ba || (angle == ba && t < bt)) {
                    best = Some((angle, t, m));
                }
            }
            let (_, _, m) = best.expect("closest template is inserted with its sample");
            PairRef { i: a, j: m }
        })
        .collect()
}

/// Three triplets per training sample: one with a worse-pose template of the
/// same object, one with a template of another object, one drawn from either
/// kind, falling back to whatever eligible negatives exist in the batch.
fn build_initial_triplets(
    meta: &PoolMeta,
    members: &[PoolRef],
    anchors: &[usize],
    pairs: &[PairRef],
    rng: &mut ChaCha8Rng,
) -> Vec<TripletRef> {
    let mut triplets = Vec::new();
    for (&a, pair) in anchors.iter().zip(pairs) {
        let PoolRef::Training(idx) = members[a] else { unreachable!() };
        let (class, ref pose) = meta.training[idx];
        let closest_angle = {
            let PoolRef::Template(t) = members[pair.j] else { unreachable!() };
            meta.angle(class, pose, &meta.templates[t].1)
        };
        let mut same_worse = Vec::new();
        let mut other = Vec::new();
        for (m, &r) in members.iter().enumerate() {
            let PoolRef::Template(t) = r else { continue };
            let (tc, ref tp) = meta.templates[t];
            if tc == class {
                if meta.angle(class, pose, tp) > closest_angle {
                    same_worse.push(m);
                }
            } else {
                other.push(m);
            }
        }
        let pick = |list: &[usize], rng: &mut ChaCha8Rng| list[rng.random_range(0..list.len())];
        let push = |k: usize, triplets: &mut Vec<TripletRef>| {
            triplets.push(TripletRef {
                anchor: a,
                similar: pair.j,
                dissimilar: k,
            })
        };
        match (!same_worse.is_empty(), !other.is_empty()) {
            (true, true) => {
                push(pick(&same_worse, rng), &mut triplets);
                push(pick(&other, rng), &mut triplets);
                let union: Vec<usize> =
                    same_worse.iter().chain(other.iter()).copied().collect();
                push(pick(&union, rng), &mut triplets);
            }
            (true, false) => {
                for _ in 0..3 {
                    push(pick(&same_worse, rng), &mut triplets);
                }
            }
            (false, true) => {
                for _ in 0..3 {
                    push(pick(&other, rng), &mut triplets);
                }
            }
            (false, false) => {}
        }
    }
    triplets
}

/// Two extra triplets per training sample using the precomputed hardest
/// negatives (which assembly has already placed in the batch).
fn bootstrap_triplets(
    meta: &PoolMeta,
    members: &[PoolRef],
    index: &HashMap<PoolRef, usize>,
    anchors: &[usize],
    pairs: &[PairRef],
    hard: &HardNegatives,
) -> Vec<TripletRef> {
    let _ = meta;
    let mut triplets = Vec::new();
    for (&a, pair) in anchors.iter().zip(pairs) {
        let PoolRef::Training(idx) = members[a] else { unreachable!() };
        for tpl in [hard.same_class[idx], hard.other_class[idx]].into_iter().flatten() {
            let member = *index
                .get(&PoolRef::Template(tpl))
                .expect("hard negative was inserted during assembly");
            triplets.push(TripletRef {
                anchor: a,
                similar: pair.j,
                dissimilar: member,
            });
        }
    }
    triplets
}

/// Shuffled per-class queues of training sample indices for one epoch.
pub fn epoch_queues(meta: &PoolMeta, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut queues = vec![Vec::new(); meta.n_classes];
    for (i, &(c, _)) in meta.training.iter().enumerate() {
        queues[c].push(i);
    }
    for q in &mut queues {
        q.shuffle(rng);
    }
    queues
}
