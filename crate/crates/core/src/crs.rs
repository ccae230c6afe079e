//! CRS processing over a sharded midpoint grid.
//!
//! The midpoint bounding box is cut into `gx x gy` shards. A CDP within
//! `apm` of an edge shared with another shard is *outer*; the rest are
//! *inner*. Each shard runs as its own worker:
//!
//! 1. post its east/west strips to the neighbors (non-blocking),
//! 2. compute all inner CDPs while a companion thread receives the
//!    east/west halos, then posts north/south strips that also carry the
//!    received east/west CDPs near the north/south edge (corner relay),
//!    and receives the north/south halos,
//! 3. wait for the halo and compute the outer CDPs.
//!
//! Edge shards exchange empty messages with a null neighbor, so every shard
//! posts four sends and completes four receives. Shards talk only through
//! channels.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use crate::cmp::{run_pool, scan_sweep_matrix, ResolvedScan, ScanConfig, SemblanceMatrix};
use crate::data::{midpoint_of, CdpGather, Dataset, Midpoint};
use crate::error::{Error, Result};
use crate::kernel::TraceSweep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::West,
        Direction::North,
        Direction::South,
    ];

    pub fn opposite(self) -> Direction {
        match self {
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::North => "north",
            Direction::South => "south",
            Direction::East => "east",
            Direction::West => "west",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionTag {
    Inner,
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// Shard geometry. Shard `(ix, iy)` has index `iy * gx + ix`; north is +y,
/// east is +x.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardPlan {
    pub grid: (usize, usize),
    pub apm: f64,
    x_edges: Vec<f64>,
    y_edges: Vec<f64>,
}

fn edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let width = (hi - lo) / n as f64;
    (0..=n)
        .map(|i| if i == n { hi } else { lo + i as f64 * width })
        .collect()
}

/// Smallest cell whose upper edge is at or beyond `v`; values on an interior
/// edge go to the lower cell.
fn cell_of(edges: &[f64], v: f64) -> usize {
    let n = edges.len() - 1;
    (1..n).find(|&i| v <= edges[i]).map_or(n - 1, |i| i - 1)
}

impl ShardPlan {
    pub fn new(bounds: Rect, grid: (usize, usize), apm: f64) -> Result<Self> {
        let (gx, gy) = grid;
        if gx == 0 || gy == 0 {
            return Err(Error::config("shard grid dimensions must be at least 1"));
        }
        if !(apm > 0.0 && apm.is_finite()) {
            return Err(Error::config(format!("apm must be positive, got {apm}")));
        }
        let plan = Self {
            grid,
            apm,
            x_edges: edges(bounds.x0, bounds.x1, gx),
            y_edges: edges(bounds.y0, bounds.y1, gy),
        };
        for (n, e, axis) in [(gx, &plan.x_edges, "x"), (gy, &plan.y_edges, "y")] {
            if n > 1 {
                let edge = (e[1] - e[0]).min(e[n] - e[n - 1]);
                if apm > edge / 2.0 {
                    return Err(Error::config(format!(
                        "apm {apm} exceeds half the {axis} shard edge ({edge}); \
                         neighborhoods would span non-adjacent shards"
                    )));
                }
            }
        }
        Ok(plan)
    }

    pub fn shard_count(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn coords(&self, shard: usize) -> (usize, usize) {
        (shard % self.grid.0, shard / self.grid.0)
    }

    pub fn cell_bounds(&self, shard: usize) -> Rect {
        let (ix, iy) = self.coords(shard);
        Rect {
            x0: self.x_edges[ix],
            x1: self.x_edges[ix + 1],
            y0: self.y_edges[iy],
            y1: self.y_edges[iy + 1],
        }
    }

    pub fn shard_of(&self, m: &Midpoint) -> usize {
        cell_of(&self.y_edges, m.my) * self.grid.0 + cell_of(&self.x_edges, m.mx)
    }

    pub fn neighbor(&self, shard: usize, dir: Direction) -> Option<usize> {
        let (ix, iy) = self.coords(shard);
        let (gx, gy) = self.grid;
        let (nx, ny) = match dir {
            Direction::East if ix + 1 < gx => (ix + 1, iy),
            Direction::West if ix > 0 => (ix - 1, iy),
            Direction::North if iy + 1 < gy => (ix, iy + 1),
            Direction::South if iy > 0 => (ix, iy - 1),
            _ => return None,
        };
        Some(ny * gx + nx)
    }

    /// Distance from `m` to the shard edge facing `dir`, measured across
    /// that axis only.
    fn edge_distance(&self, shard: usize, dir: Direction, m: &Midpoint) -> f64 {
        let r = self.cell_bounds(shard);
        match dir {
            Direction::East => r.x1 - m.mx,
            Direction::West => m.mx - r.x0,
            Direction::North => r.y1 - m.my,
            Direction::South => m.my - r.y0,
        }
    }

    /// Whether `m` (in `shard`'s row or column) lies in the strip that faces
    /// `dir` and that neighbor exists.
    pub fn in_strip(&self, shard: usize, dir: Direction, m: &Midpoint) -> bool {
        self.neighbor(shard, dir).is_some() && self.edge_distance(shard, dir, m) <= self.apm
    }

    pub fn region_of(&self, shard: usize, m: &Midpoint) -> RegionTag {
        if Direction::ALL.iter().any(|&d| self.in_strip(shard, d, m)) {
            RegionTag::Outer
        } else {
            RegionTag::Inner
        }
    }
}

/// A gather with its midpoint.
#[derive(Debug, Clone, Copy)]
pub struct CdpSite<'a> {
    pub gather: &'a CdpGather,
    pub midpoint: Midpoint,
}

impl<'a> CdpSite<'a> {
    pub fn new(gather: &'a CdpGather) -> Result<Self> {
        Ok(Self {
            gather,
            midpoint: midpoint_of(gather)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub plan: ShardPlan,
    /// Dataset indices of each shard's CDPs, in dataset order.
    pub shards: Vec<Vec<usize>>,
    /// Region of every CDP, by dataset index.
    pub tags: Vec<RegionTag>,
    pub midpoints: Vec<Midpoint>,
}

pub fn partition(dataset: &Dataset, grid: (usize, usize), apm: f64) -> Result<Partition> {
    if dataset.ncdps() == 0 {
        return Err(Error::param("cannot partition an empty dataset"));
    }
    let midpoints = dataset
        .gathers
        .iter()
        .map(midpoint_of)
        .collect::<Result<Vec<_>>>()?;
    if midpoints.iter().any(|m| !m.mx.is_finite() || !m.my.is_finite()) {
        return Err(Error::param("dataset has non-finite midpoints"));
    }
    let bounds = midpoints.iter().fold(
        Rect {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        },
        |r, m| Rect {
            x0: r.x0.min(m.mx),
            x1: r.x1.max(m.mx),
            y0: r.y0.min(m.my),
            y1: r.y1.max(m.my),
        },
    );
    let plan = ShardPlan::new(bounds, grid, apm)?;
    let mut shards = vec![Vec::new(); plan.shard_count()];
    let mut tags = Vec::with_capacity(midpoints.len());
    for (i, m) in midpoints.iter().enumerate() {
        let s = plan.shard_of(m);
        shards[s].push(i);
        tags.push(plan.region_of(s, m));
    }
    Ok(Partition {
        plan,
        shards,
        tags,
        midpoints,
    })
}

/// Candidates within `apm` (inclusive) of `central`, other than the central
/// CDP itself, ordered by `cdp_id`.
pub fn neighbors_of<'a>(
    central_id: u32,
    central: &Midpoint,
    candidates: &[CdpSite<'a>],
    apm: f64,
) -> Vec<&'a CdpGather> {
    let r2 = apm * apm;
    let mut found: Vec<&CdpGather> = candidates
        .iter()
        .filter(|c| c.gather.cdp_id != central_id && c.midpoint.distance_squared(central) <= r2)
        .map(|c| c.gather)
        .collect();
    found.sort_by_key(|g| g.cdp_id);
    found
}

pub(crate) fn scan_central_resolved(
    central: &CdpGather,
    neighbors: &[&CdpGather],
    scan: &ResolvedScan,
    cache: &mut crate::cache::TraceCache,
) -> Result<SemblanceMatrix> {
    if central.is_empty() {
        return Err(Error::Precondition(format!("cdp {} has no traces", central.cdp_id)));
    }
    let sweep = TraceSweep::with_neighbors(central, neighbors)?;
    scan_sweep_matrix(central.cdp_id, &sweep, scan, cache)
}

/// Semblance of a central CDP over its own traces and its neighbors'.
pub fn scan_central_cdp(
    central: &CdpGather,
    neighbors: &[&CdpGather],
    config: &ScanConfig,
) -> Result<SemblanceMatrix> {
    let scan = config.resolve()?;
    scan_central_resolved(central, neighbors, &scan, &mut scan.new_cache())
}

#[derive(Debug, Clone)]
pub struct HaloMessage {
    pub source: usize,
    /// Face of the sender the strip was taken from.
    pub direction: Direction,
    pub gathers: Vec<CdpGather>,
}

#[derive(Debug, Clone)]
pub struct CrsOptions {
    pub grid: (usize, usize),
    pub apm: f64,
    pub workers_per_shard: usize,
    pub halo_timeout: Duration,
    /// Holds back each shard's halo traffic; used to check that inner
    /// compute proceeds without it.
    pub halo_delay: Option<Duration>,
}

impl CrsOptions {
    pub fn new(grid: (usize, usize), apm: f64) -> Self {
        Self {
            grid,
            apm,
            workers_per_shard: 1,
            halo_timeout: Duration::from_secs(120),
            halo_delay: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShardEvent {
    SendsPosted,
    InnerStart,
    InnerDone,
    HaloReceived,
    OuterStart,
    OuterDone,
}

#[derive(Debug, Clone)]
pub struct ShardReport {
    pub shard: usize,
    pub inner: usize,
    pub outer: usize,
    pub sends: usize,
    pub receives: usize,
    pub halo_cdps: usize,
    /// Events with their offset from the start of the run, in time order.
    pub events: Vec<(ShardEvent, Duration)>,
}

impl ShardReport {
    pub fn time_of(&self, e: ShardEvent) -> Option<Duration> {
        self.events.iter().find(|(x, _)| *x == e).map(|&(_, t)| t)
    }
}

#[derive(Debug, Clone)]
pub struct CrsRun {
    /// One matrix per CDP, ordered by `cdp_id`.
    pub matrices: Vec<SemblanceMatrix>,
    pub shards: Vec<ShardReport>,
}

struct Mailbox {
    inbox: Receiver<HaloMessage>,
    outboxes: Vec<Sender<HaloMessage>>,
}

/// Sends `msg` toward `dir`, or drops it into the null neighbor.
fn post(plan: &ShardPlan, shard: usize, dir: Direction, gathers: Vec<CdpGather>, outboxes: &[Sender<HaloMessage>]) {
    if let Some(n) = plan.neighbor(shard, dir) {
        // the receiver only goes away after a failure elsewhere, which
        // surfaces as its own error
        let _ = outboxes[n].send(HaloMessage {
            source: shard,
            direction: dir,
            gathers,
        });
    }
}

fn strip(plan: &ShardPlan, shard: usize, dir: Direction, sites: &[CdpSite<'_>]) -> Vec<CdpGather> {
    sites
        .iter()
        .filter(|s| plan.in_strip(shard, dir, &s.midpoint))
        .map(|s| s.gather.clone())
        .collect()
}

/// Waits for the messages from the neighbors on `faces`. A face without a
/// neighbor yields an empty message immediately. Messages from the other
/// phase are kept in `early`.
fn receive(
    plan: &ShardPlan,
    shard: usize,
    faces: [Direction; 2],
    inbox: &Receiver<HaloMessage>,
    early: &mut Vec<HaloMessage>,
    timeout: Duration,
) -> Result<Vec<HaloMessage>> {
    let mut got: Vec<HaloMessage> = Vec::new();
    for face in faces {
        if plan.neighbor(shard, face).is_none() {
            got.push(HaloMessage {
                source: usize::MAX,
                direction: face.opposite(),
                gathers: Vec::new(),
            });
        }
    }
    let wanted = |m: &HaloMessage| faces.iter().any(|f| m.direction == f.opposite());
    let mut i = 0;
    while i < early.len() {
        if wanted(&early[i]) {
            got.push(early.swap_remove(i));
        } else {
            i += 1;
        }
    }
    let deadline = Instant::now() + timeout;
    while got.len() < 2 {
        let remaining = deadline.saturating_duration_since(Instant::now());
        match inbox.recv_timeout(remaining) {
            Ok(m) if wanted(&m) => got.push(m),
            Ok(m) => early.push(m),
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {
                let missing = faces
                    .iter()
                    .find(|f| !got.iter().any(|m| m.direction == f.opposite()))
                    .copied()
                    .unwrap_or(faces[0]);
                return Err(Error::Deadlock {
                    shard,
                    edge: missing.name(),
                });
            }
        }
    }
    Ok(got)
}

struct HaloOutcome {
    gathers: Vec<CdpGather>,
    sends: usize,
    receives: usize,
    received_at: Instant,
}

/// Receive east/west, relay corners north/south, receive north/south.
fn exchange_rest(
    plan: &ShardPlan,
    shard: usize,
    own: &[CdpSite<'_>],
    mailbox: &Mailbox,
    opts: &CrsOptions,
) -> Result<HaloOutcome> {
    if let Some(d) = opts.halo_delay {
        thread::sleep(d);
    }
    let mut early = Vec::new();
    let ew = receive(
        plan,
        shard,
        [Direction::East, Direction::West],
        &mailbox.inbox,
        &mut early,
        opts.halo_timeout,
    )?;
    let mut halo: Vec<CdpGather> = ew.into_iter().flat_map(|m| m.gathers).collect();
    let relayed: Vec<(CdpGather, Midpoint)> = halo
        .iter()
        .map(|g| Ok((g.clone(), midpoint_of(g)?)))
        .collect::<Result<_>>()?;
    for dir in [Direction::North, Direction::South] {
        let mut out = strip(plan, shard, dir, own);
        if plan.neighbor(shard, dir).is_some() {
            out.extend(
                relayed
                    .iter()
                    .filter(|(_, m)| plan.edge_distance(shard, dir, m) <= plan.apm)
                    .map(|(g, _)| g.clone()),
            );
        }
        post(plan, shard, dir, out, &mailbox.outboxes);
    }
    let ns = receive(
        plan,
        shard,
        [Direction::North, Direction::South],
        &mailbox.inbox,
        &mut early,
        opts.halo_timeout,
    )?;
    halo.extend(ns.into_iter().flat_map(|m| m.gathers));
    Ok(HaloOutcome {
        gathers: halo,
        sends: 4,
        receives: 4,
        received_at: Instant::now(),
    })
}

fn compute_region(
    ids: &[usize],
    candidates: &[CdpSite<'_>],
    dataset: &Dataset,
    part: &Partition,
    scan: &ResolvedScan,
    workers: usize,
) -> Result<Vec<SemblanceMatrix>> {
    run_pool(ids.len(), workers, scan, |i, cache| {
        let idx = ids[i];
        let central = &dataset.gathers[idx];
        let nbrs = neighbors_of(central.cdp_id, &part.midpoints[idx], candidates, part.plan.apm);
        scan_central_resolved(central, &nbrs, scan, cache)
    })
}

#[allow(clippy::too_many_arguments)]
fn run_shard(
    shard: usize,
    dataset: &Dataset,
    part: &Partition,
    scan: &ResolvedScan,
    opts: &CrsOptions,
    mailbox: Mailbox,
    start: Instant,
) -> Result<(Vec<SemblanceMatrix>, ShardReport)> {
    let plan = &part.plan;
    let ids = &part.shards[shard];
    let own: Vec<CdpSite<'_>> = ids
        .iter()
        .map(|&i| CdpSite {
            gather: &dataset.gathers[i],
            midpoint: part.midpoints[i],
        })
        .collect();
    let (inner, outer): (Vec<usize>, Vec<usize>) =
        ids.iter().partition(|&&i| part.tags[i] == RegionTag::Inner);

    let mut events = Vec::new();
    let mut mark = |e: ShardEvent, at: Instant| events.push((e, at.duration_since(start)));

    for dir in [Direction::East, Direction::West] {
        post(plan, shard, dir, strip(plan, shard, dir, &own), &mailbox.outboxes);
    }
    mark(ShardEvent::SendsPosted, Instant::now());

    let (inner_result, halo, inner_marks) = thread::scope(|s| {
        let own = &own;
        let comm = s.spawn(move || exchange_rest(plan, shard, own, &mailbox, opts));
        let t0 = Instant::now();
        let r = compute_region(&inner, own, dataset, part, scan, opts.workers_per_shard);
        let t1 = Instant::now();
        let halo = comm
            .join()
            .unwrap_or_else(|_| Err(Error::Internal(format!("shard {shard} comm thread panicked"))));
        (r, halo, (t0, t1))
    });
    mark(ShardEvent::InnerStart, inner_marks.0);
    mark(ShardEvent::InnerDone, inner_marks.1);
    let mut matrices = inner_result?;
    let halo = halo?;
    mark(ShardEvent::HaloReceived, halo.received_at);

    let mut candidates = own.clone();
    for g in &halo.gathers {
        candidates.push(CdpSite::new(g)?);
    }
    mark(ShardEvent::OuterStart, Instant::now());
    matrices.extend(compute_region(
        &outer,
        &candidates,
        dataset,
        part,
        scan,
        opts.workers_per_shard,
    )?);
    mark(ShardEvent::OuterDone, Instant::now());
    events.sort_by_key(|&(_, t)| t);

    Ok((
        matrices,
        ShardReport {
            shard,
            inner: inner.len(),
            outer: outer.len(),
            sends: halo.sends,
            receives: halo.receives,
            halo_cdps: halo.gathers.len(),
            events,
        },
    ))
}

/// CRS semblance for every CDP with one worker per shard and halo exchange
/// between adjacent shards.
pub fn run_crs(dataset: &Dataset, config: &ScanConfig, opts: &CrsOptions) -> Result<CrsRun> {
    let scan = config.resolve()?;
    if opts.workers_per_shard == 0 {
        return Err(Error::param("workers per shard must be at least 1"));
    }
    let part = partition(dataset, opts.grid, opts.apm)?;
    let n = part.plan.shard_count();
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..n).map(|_| mpsc::channel()).unzip();
    let start = Instant::now();

    let results: Vec<Result<(Vec<SemblanceMatrix>, ShardReport)>> = thread::scope(|s| {
        let handles: Vec<_> = receivers
            .into_iter()
            .enumerate()
            .map(|(shard, inbox)| {
                let mailbox = Mailbox {
                    inbox,
                    outboxes: senders.clone(),
                };
                let (part, scan) = (&part, &scan);
                s.spawn(move || run_shard(shard, dataset, part, scan, opts, mailbox, start))
            })
            .collect();
        drop(senders);
        handles
            .into_iter()
            .enumerate()
            .map(|(shard, h)| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Internal(format!("shard {shard} panicked"))))
            })
            .collect()
    });

    let mut matrices = Vec::with_capacity(dataset.ncdps());
    let mut shards = Vec::with_capacity(n);
    // a deadlock is usually the echo of another shard's failure; report the root cause
    let mut first_err: Option<Error> = None;
    for r in results {
        match r {
            Ok((m, rep)) => {
                matrices.extend(m);
                shards.push(rep);
            }
            Err(e) => {
                let replace = match (&first_err, &e) {
                    (None, _) => true,
                    (Some(Error::Deadlock { .. }), Error::Deadlock { .. }) => false,
                    (Some(Error::Deadlock { .. }), _) => true,
                    _ => false,
                };
                if replace {
                    first_err = Some(e);
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    matrices.sort_by_key(|m| m.cdp_id);
    Ok(CrsRun { matrices, shards })
}
