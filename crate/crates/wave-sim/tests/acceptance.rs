//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use wave_sim::export_csv;
use wave_sim_core::aodv::{AodvAction, AodvNode, AodvParams, AodvTimer, Control};
use wave_sim_core::apps::FtpState;
use wave_sim_core::mac::{
    accept_frame, AcceptVerdict, Bssid, Frame, FrameKind, MacAddr, MacOutput, MacParams, Station, StationMode,
    TxOutcome,
};
use wave_sim_core::metrics::Series;
use wave_sim_core::phy::{frame_airtime, in_range, ChannelId, PhyParams};
use wave_sim_core::sim::BodyKind;
use wave_sim_core::{NodeId, RngStream, RunOutput, ScenarioConfig, ScenarioKind, SimTime, Simulation};

type Verdict = Result<String, String>;

fn cfg(kind: ScenarioKind, speed: f64, seed: u64) -> ScenarioConfig {
    ScenarioConfig::new(kind, speed, seed)
}

fn run(c: ScenarioConfig) -> RunOutput {
    Simulation::new(c).expect("valid scenario").run().expect("run completes")
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn exported(run: &RunOutput) -> Vec<(String, Vec<u8>)> {
    let tmp = tempfile::tempdir().unwrap();
    export_csv(run, tmp.path()).unwrap();
    dir_files(tmp.path())
}

/// Every run made by the suite, for the conservation check.
struct Ctx {
    runs: Vec<(String, RunOutput)>,
}

impl Ctx {
    fn run(&mut self, label: &str, c: ScenarioConfig) -> &RunOutput {
        self.runs.push((label.to_string(), run(c)));
        &self.runs.last().unwrap().1
    }
}

fn crit1(ctx: &mut Ctx) -> Verdict {
    let mut slowest = Duration::ZERO;
    for kind in [ScenarioKind::SingleHop, ScenarioKind::MultiHop, ScenarioKind::NodeToNode] {
        let t0 = Instant::now();
        let a = exported(ctx.run(&format!("{} seed 1 (a)", kind.as_str()), cfg(kind, 32.0, 1)));
        slowest = slowest.max(t0.elapsed());
        let b = exported(ctx.run(&format!("{} seed 1 (b)", kind.as_str()), cfg(kind, 32.0, 1)));
        let c = exported(ctx.run(&format!("{} seed 2", kind.as_str()), cfg(kind, 32.0, 2)));
        if a != b {
            return Err(format!("{}: same seed gave different files", kind.as_str()));
        }
        if a == c {
            return Err(format!("{}: seeds 1 and 2 gave identical files", kind.as_str()));
        }
    }
    if slowest >= Duration::from_secs(10) {
        return Err(format!("slowest 120 s run took {slowest:?}"));
    }
    Ok(format!("3 scenarios byte-identical per seed, seeds differ, slowest run {slowest:.2?}"))
}

fn crit2() -> Verdict {
    use AcceptVerdict::{Accept as A, DropFilter as F, DropInvalid as I};
    let b1 = Bssid([0x02, 0, 0, 0, 0, 1]);
    let b2 = Bssid([0x02, 0, 0, 0, 0, 2]);
    let modes = [("wave", StationMode::WaveMode), ("member(B1)", StationMode::WbssMember(b1))];
    let bssids = [("wildcard", Bssid::WILDCARD), ("B1", b1), ("B2", b2)];
    // Rows: mode, bssid, verdicts for DS bits (to,from) = 00, 01, 10, 11.
    let table: [[[AcceptVerdict; 4]; 3]; 2] = [
        [[A, I, I, I], [F, F, F, F], [F, F, F, F]],
        [[A, I, I, I], [A, A, A, A], [F, F, F, F]],
    ];
    let me = MacAddr::for_node(NodeId(1));
    let mut cases = 0;
    for (mi, (mname, mode)) in modes.iter().enumerate() {
        for (bi, (bname, bssid)) in bssids.iter().enumerate() {
            for ds in 0..4 {
                let mut f = Frame::data(MacAddr::for_node(NodeId(0)), me, *bssid, 64, ChannelId::CCH, ());
                f.to_ds = ds & 2 != 0;
                f.from_ds = ds & 1 != 0;
                let got = accept_frame(*mode, me, &f);
                let want = table[mi][bi][ds];
                if got != want {
                    return Err(format!("{mname} bssid={bname} ds={ds:02b}: got {got:?}, want {want:?}"));
                }
                cases += 1;
            }
        }
    }
    for (mname, mode) in modes {
        let mut f = Frame::data(MacAddr::for_node(NodeId(0)), MacAddr::BROADCAST, Bssid::WILDCARD, 64, ChannelId::CCH, ());
        if accept_frame(mode, me, &f) != A {
            return Err(format!("{mname}: broadcast destination not accepted"));
        }
        f.dst = MacAddr::for_node(NodeId(7));
        if accept_frame(mode, me, &f) != F {
            return Err(format!("{mname}: frame for another station not filtered"));
        }
    }
    Ok(format!("{cases}/24 header cases match, destination filter checked"))
}

/// Sends one unicast frame, answering the attempt with index `ack_on` (if
/// any). Returns the cw at each transmission and the outcome.
fn backoff_trace(st: &mut Station<()>, ack_on: Option<usize>) -> (Vec<u16>, TxOutcome) {
    let phy = PhyParams::default();
    let mac = MacParams::default();
    let mut rng = RngStream::new(1, "backoff/node1");
    let peer = MacAddr::for_node(NodeId(2));
    let mut now = SimTime::from_secs(1);
    let mut out = Vec::new();
    st.enqueue(Frame::data(st.addr(), peer, Bssid::WILDCARD, 160, ChannelId::CCH, ()), now, &mut rng, &mut out);
    let mut cws = Vec::new();
    let mut pending: VecDeque<_> = out.drain(..).collect();
    while let Some(o) = pending.pop_front() {
        match o {
            MacOutput::ArmTimer { at, timer } => {
                now = now.max(at);
                st.on_timer(timer, now, &mut rng, &mut out);
            }
            MacOutput::StartTx(_) => {
                cws.push(st.cw());
                now += frame_airtime(160, &phy);
                st.on_tx_end(now, &mut rng, &mut out);
                if ack_on == Some(cws.len() - 1) {
                    now = now + phy.sifs() + mac.ack_airtime(&phy);
                    st.on_ack(peer, now, &mut rng, &mut out);
                }
            }
            MacOutput::Done(c) => return (cws, c.outcome),
        }
        pending.extend(out.drain(..));
    }
    panic!("station went quiet without completing");
}

fn crit3() -> Verdict {
    let mut st: Station<()> = Station::new(NodeId(1), MacParams::default(), PhyParams::default());
    let (cws, outcome) = backoff_trace(&mut st, None);
    let want = [15, 31, 63, 127, 255, 511, 1023, 1023];
    if cws != want {
        return Err(format!("cw sequence {cws:?}, want {want:?}"));
    }
    if outcome != (TxOutcome::GaveUp { retries: 7 }) {
        return Err(format!("outcome {outcome:?} after 8 attempts"));
    }
    let (cws, outcome) = backoff_trace(&mut st, Some(3));
    if cws != [15, 31, 63, 127] || outcome != TxOutcome::Acked || st.cw() != 15 {
        return Err(format!("after 3 failures and an ACK: cws {cws:?}, {outcome:?}, cw {}", st.cw()));
    }
    Ok(format!("cw {want:?}, gave up after 8 attempts, ACK resets to 15"))
}

enum NetEv {
    Deliver { to: usize, from: usize, msg: Control },
    Timer { node: usize, timer: AodvTimer },
}

/// Routing nodes on a static line with every hop taking the same 1 µs.
struct Net {
    pos: Vec<f64>,
    phy: PhyParams,
    nodes: Vec<AodvNode<u32>>,
    queue: BinaryHeap<Reverse<(u64, u64, usize)>>,
    slab: Vec<Option<NetEv>>,
    now: SimTime,
}

#[derive(Debug, Clone, Copy)]
enum Outcome {
    Done,
    Failed,
}

impl Net {
    fn new(pos: Vec<f64>) -> Self {
        let params = AodvParams {
            hello_enabled: false,
            ..AodvParams::default()
        };
        let nodes = (0..pos.len()).map(|i| AodvNode::new(NodeId(i as u16), params.clone())).collect();
        Net {
            pos,
            phy: PhyParams::default(),
            nodes,
            queue: BinaryHeap::new(),
            slab: Vec::new(),
            now: SimTime::ZERO,
        }
    }

    fn push(&mut self, at: SimTime, ev: NetEv) {
        let seq = self.slab.len();
        self.slab.push(Some(ev));
        self.queue.push(Reverse((at.as_micros(), seq as u64, seq)));
    }

    fn linked(&self, a: usize, b: usize) -> bool {
        a != b && in_range(self.pos[a], self.pos[b], &self.phy)
    }

    fn apply(&mut self, node: usize, actions: Vec<AodvAction<u32>>, watch: (usize, usize), result: &mut Option<Outcome>) {
        let hop = SimTime::from_micros(1);
        for a in actions {
            match a {
                AodvAction::Broadcast(msg) => {
                    for j in 0..self.pos.len() {
                        if self.linked(node, j) {
                            self.push(self.now + hop, NetEv::Deliver { to: j, from: node, msg: msg.clone() });
                        }
                    }
                }
                AodvAction::Unicast { next_hop, msg } => {
                    let j = next_hop.0 as usize;
                    if self.linked(node, j) {
                        self.push(self.now + hop, NetEv::Deliver { to: j, from: node, msg });
                    }
                }
                AodvAction::ArmTimer { at, timer } => self.push(at, NetEv::Timer { node, timer }),
                AodvAction::DiscoveryDone { dest, .. } if (node, dest.0 as usize) == watch => {
                    *result = Some(Outcome::Done)
                }
                AodvAction::DiscoveryFailed { dest, .. } if (node, dest.0 as usize) == watch => {
                    *result = Some(Outcome::Failed)
                }
                _ => {}
            }
        }
    }

    /// Resolves `dst` from `src` and drains all resulting traffic.
    fn discover(&mut self, src: usize, dst: usize) -> Option<Outcome> {
        let mut result = None;
        let mut out = Vec::new();
        self.nodes[src].resolve_route(NodeId(dst as u16), 0, self.now, &mut out).unwrap();
        if out.iter().any(|a| matches!(a, AodvAction::Forward { .. })) {
            result = Some(Outcome::Done);
        }
        self.apply(src, out, (src, dst), &mut result);
        while let Some(Reverse((at, _, idx))) = self.queue.pop() {
            self.now = SimTime::from_micros(at);
            let ev = self.slab[idx].take().unwrap();
            let mut out = Vec::new();
            let node = match ev {
                NetEv::Deliver { to, from, msg } => {
                    self.nodes[to].on_control(msg, NodeId(from as u16), self.now, &mut out);
                    to
                }
                NetEv::Timer { node, timer } => {
                    self.nodes[node].on_timer(timer, self.now, &mut out);
                    node
                }
            };
            self.apply(node, out, (src, dst), &mut result);
        }
        result
    }
}

fn bfs(pos: &[f64], phy: &PhyParams, src: usize) -> Vec<Option<u8>> {
    let mut dist = vec![None; pos.len()];
    dist[src] = Some(0u8);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for v in 0..pos.len() {
            if dist[v].is_none() && in_range(pos[u], pos[v], phy) {
                dist[v] = Some(dist[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

fn crit4() -> Verdict {
    let phy = PhyParams::default();
    let mut rng = RngStream::new(2024, "acceptance/topologies");
    let (mut reachable, mut unreachable, mut multi_hop) = (0, 0, 0);
    for topo in 0..200 {
        let n = rng.uniform(3, 5).unwrap() as usize;
        let pos: Vec<f64> = (0..n).map(|_| rng.uniform(0, 3000).unwrap() as f64).collect();
        for src in 0..n {
            let truth = bfs(&pos, &phy, src);
            let mut net = Net::new(pos.clone());
            for dst in (0..n).filter(|&d| d != src) {
                let outcome = net.discover(src, dst);
                let route = net.nodes[src].route(NodeId(dst as u16)).filter(|r| r.usable(net.now));
                match (truth[dst], outcome) {
                    (Some(h), Some(Outcome::Done)) => {
                        let r = route.ok_or_else(|| format!("topology {topo} {pos:?}: {src}->{dst} done but no route"))?;
                        if r.hop_count != h || !in_range(pos[src], pos[r.next_hop.0 as usize], &phy) {
                            return Err(format!(
                                "topology {topo} {pos:?}: {src}->{dst} hop_count {} via {}, bfs {h}",
                                r.hop_count, r.next_hop
                            ));
                        }
                        reachable += 1;
                        multi_hop += usize::from(h > 1);
                    }
                    (None, Some(Outcome::Failed)) => unreachable += 1,
                    (t, _) => {
                        return Err(format!(
                            "topology {topo} {pos:?}: {src}->{dst} bfs {t:?} but discovery {}",
                            match outcome {
                                Some(Outcome::Done) => "succeeded",
                                Some(Outcome::Failed) => "failed",
                                None => "never finished",
                            }
                        ))
                    }
                }
            }
        }
    }
    Ok(format!(
        "200 topologies: {reachable} reachable pairs match BFS ({multi_hop} multi-hop), {unreachable} unreachable pairs fail"
    ))
}

fn in_band(name: &str, v: Option<f64>, lo: f64, hi: f64) -> Verdict {
    match v {
        Some(v) if (lo..=hi).contains(&v) => Ok(format!("{name} = {v:.6} in [{lo}, {hi}]")),
        Some(v) => Err(format!("{name} = {v:.6} outside [{lo}, {hi}]")),
        None => Err(format!("{name} has no samples")),
    }
}

fn s2(ctx: &Ctx) -> &RunOutput {
    &ctx.runs.iter().find(|(l, _)| l == "multi_hop seed 1 (a)").unwrap().1
}

fn crit5(ctx: &Ctx) -> Verdict {
    in_band("mean voice_e2e_delay_s", s2(ctx).metrics.mean(Series::VoiceE2eDelayS), 0.005, 0.2)
}

fn crit6(ctx: &Ctx) -> Verdict {
    in_band("mean wlan_delay_s", s2(ctx).metrics.mean(Series::WlanDelayS), 1e-4, 1e-3)
}

fn crit7(ctx: &Ctx) -> Verdict {
    let r = s2(ctx);
    let from = SimTime::from_secs(10);
    let sent = in_band("aodv_sent_pps", r.metrics.mean_since(Series::AodvSentPps, from), 1.5, 6.0)?;
    let recv = in_band("aodv_received_pps", r.metrics.mean_since(Series::AodvReceivedPps, from), 3.0, 12.0)?;
    let span = r.config.duration_s - 10.0;
    let per_node: Vec<String> = (0..3)
        .map(|i| {
            let n = r
                .tx_log
                .iter()
                .filter(|e| e.sender == NodeId(i) && e.body == BodyKind::Routing && e.start >= from)
                .count();
            format!("node{i} {:.2}", n as f64 / span)
        })
        .collect();
    Ok(format!(
        "network-wide, t >= 10 s: {sent}; {recv} (sent per node: {})",
        per_node.join(", ")
    ))
}

fn crit8(ctx: &mut Ctx) -> Verdict {
    let mut means = Vec::new();
    for speed in [32.0, 65.0, 97.0] {
        let r = ctx.run(&format!("single_hop {speed} km/h"), cfg(ScenarioKind::SingleHop, speed, 1));
        let m = r
            .metrics
            .mean(Series::AodvDiscoveryTimeS)
            .ok_or_else(|| format!("{speed} km/h: no discovery samples"))?;
        means.push(m);
    }
    let max = means.iter().cloned().fold(f64::MIN, f64::max);
    let min = means.iter().cloned().fold(f64::MAX, f64::min);
    let spread = (max - min) / (means.iter().sum::<f64>() / 3.0);
    let msg = format!("discovery means {means:?} s, relative spread {spread:.4}");
    if spread < 0.15 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// First instant in `(lo, hi]` where the pair's in-range state differs from `lo`.
fn bisect(sim: &Simulation, mut lo: SimTime, mut hi: SimTime, phy: &PhyParams) -> SimTime {
    let linked = |t| in_range(sim.position(NodeId(0), t).unwrap(), sim.position(NodeId(1), t).unwrap(), phy);
    let at_lo = linked(lo);
    while hi.as_micros() - lo.as_micros() > 1 {
        let mid = SimTime::from_micros((lo.as_micros() + hi.as_micros()) / 2);
        if linked(mid) == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn crit9(ctx: &mut Ctx) -> Verdict {
    let phy = PhyParams::default();

    let mut sim = Simulation::new(cfg(ScenarioKind::NodeToNode, 32.0, 1)).unwrap();
    let end = sim.config().duration();
    sim.run_until(end).unwrap();
    let step = SimTime::from_millis(100);
    let mut t = SimTime::ZERO;
    while t <= end {
        if !in_range(sim.position(NodeId(0), t).unwrap(), sim.position(NodeId(1), t).unwrap(), &phy) {
            return Err(format!("(32,32) pair out of range at {t}"));
        }
        t += step;
    }
    let states: Vec<FtpState> = sim.ftp_sessions().map(|s| s.state()).collect();
    let completed = states.iter().filter(|s| **s == FtpState::Completed).count();
    let open_tail = states.iter().rev().skip(1).all(|s| *s == FtpState::Completed);
    if completed == 0 || !open_tail || states.contains(&FtpState::Failed) {
        return Err(format!("(32,32) FTP sessions {states:?}"));
    }
    let equal_span = end.as_secs_f64();
    ctx.runs.push(("node_to_node 32/32 (positions)".into(), sim.finish().unwrap()));

    let mut c = cfg(ScenarioKind::NodeToNode, 97.0, 1);
    c.geometry.node_to_node_gap_m = 1200.0;
    c.duration_s = 150.0;
    let mut sim = Simulation::new(c).unwrap();
    let end = sim.config().duration();
    sim.run_until(end).unwrap();
    let mut edges = Vec::new();
    let mut prev = SimTime::ZERO;
    let linked = |sim: &Simulation, t| {
        in_range(sim.position(NodeId(0), t).unwrap(), sim.position(NodeId(1), t).unwrap(), &phy)
    };
    let mut t = step;
    while t <= end {
        if linked(&sim, t) != linked(&sim, prev) {
            edges.push(bisect(&sim, prev, t, &phy));
        }
        prev = t;
        t += step;
    }
    ctx.runs.push(("node_to_node 32/97 gap 1200 m".into(), sim.finish().unwrap()));
    if edges.len() != 2 {
        return Err(format!("(32,97): expected one contact window, range edges at {edges:?}"));
    }
    let window = (edges[1].as_micros() - edges[0].as_micros()) as f64 / 1e6;
    let dv = (97.0f64 - 32.0) / 3.6;
    let expected = 2.0 * phy.comm_range_m / dv;
    let err = (window - expected).abs() / expected;
    let msg = format!(
        "(32,32) in range for all {equal_span} s, {completed} FTP sessions completed; (32,97) window {window:.3} s vs {expected:.3} s (err {:.4}%)",
        err * 100.0
    );
    if err < 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn crit10(ctx: &Ctx) -> Verdict {
    let cap = PhyParams::default().data_rate_bps as f64;
    for (label, r) in &ctx.runs {
        if !r.ledger.balanced() {
            return Err(format!("{label}: ledger {:?}", r.ledger));
        }
        let peak = r.metrics.aggregate(Series::WlanThroughputBps).max;
        if peak > cap {
            return Err(format!("{label}: throughput peak {peak} bps"));
        }
    }
    let peak = ctx
        .runs
        .iter()
        .map(|(_, r)| r.metrics.aggregate(Series::WlanThroughputBps).max)
        .fold(0.0, f64::max);
    Ok(format!("{} runs balanced, peak throughput {peak} bps <= {cap}", ctx.runs.len()))
}

fn crit11() -> Verdict {
    let phy = PhyParams::default();
    let mac = MacParams::default();
    let consts = [
        ("slot", phy.slot().as_micros(), 13),
        ("sifs", phy.sifs().as_micros(), 32),
        ("difs", phy.difs().as_micros(), 58),
        ("overhead", phy.phy_overhead_us, 40),
        ("airtime(160)", frame_airtime(160, &phy).as_micros(), 254),
        ("airtime(64)", frame_airtime(64, &phy).as_micros(), 126),
        ("airtime(0)", frame_airtime(0, &phy).as_micros(), 40),
        ("ack airtime", mac.ack_airtime(&phy).as_micros(), 54),
    ];
    for (name, got, want) in consts {
        if got != want {
            return Err(format!("{name} = {got} µs, want {want}"));
        }
    }

    let json = r#"{
        "scenario": "custom",
        "duration_s": 1,
        "mac": {"cw_min": 0},
        "aodv": {"hello_enabled": false},
        "nodes": [
            {"id": 0, "role": "server", "position_m": 0},
            {"id": 1, "role": "server", "position_m": 500}
        ]
    }"#;
    let c: ScenarioConfig = serde_json::from_str(json).unwrap();
    let mut sim = Simulation::new(c).unwrap();
    let t0 = SimTime::from_millis(100);
    sim.probe(t0, NodeId(0), Some(NodeId(1)), 160).unwrap();
    sim.run_until(SimTime::from_millis(200)).unwrap();
    let trace: Vec<(FrameKind, u64, u64)> = sim
        .tx_log()
        .iter()
        .map(|e| (e.kind, e.start.as_micros() - t0.as_micros(), e.end.as_micros() - t0.as_micros()))
        .collect();
    let want = [(FrameKind::Data, 58, 58 + 254), (FrameKind::Ack, 58 + 254 + 32, 398)];
    if trace != want {
        return Err(format!("idle-medium trace {trace:?}, want {want:?}"));
    }
    Ok("58/32/13 µs, 40 µs overhead, airtimes exact; DIFS+DATA+SIFS+ACK = 398 µs".into())
}

fn main() {
    let mut ctx = Ctx { runs: Vec::new() };
    let results: Vec<(u32, &str, Verdict)> = vec![
        (1, "determinism and runtime", crit1(&mut ctx)),
        (2, "MAC accept truth table", crit2()),
        (3, "backoff law", crit3()),
        (4, "AODV hop counts vs BFS", crit4()),
        (5, "multi-hop voice end-to-end delay", crit5(&ctx)),
        (6, "multi-hop WLAN delay", crit6(&ctx)),
        (7, "multi-hop AODV control traffic", crit7(&ctx)),
        (8, "discovery time speed spread", crit8(&mut ctx)),
        (9, "node-to-node contact window", crit9(&mut ctx)),
        (10, "packet conservation and rate cap", crit10(&ctx)),
        (11, "airtime and idle-medium timing", crit11()),
    ];
    let mut failed = 0;
    for (n, name, v) in &results {
        match v {
            Ok(msg) => println!("PASS criterion {n:>2} ({name}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {n:>2} ({name}): {msg}");
            }
        }
    }
    println!("acceptance: {}/{} passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
