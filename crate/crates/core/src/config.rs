//! Sectioned plain-text scenario files.
//!
//! ```text
//! # comment
//! [exosystem]
//! S = 0,-2; 2,0
//! w0 = 1, 0
//!
//! [graph]
//! adjacency = 0,0,0; 1,0,0; 0,1,0
//! directed = true
//!
//! [plant]          # shared by every follower; [plant.2] overrides agent 2
//! A = 0,1; -1,0
//! B = 0; 1
//! C = 1,0
//! P = 0,0; 1,0
//! Q = auto         # Q = -C Pi
//!
//! [design]
//! h = 0.1
//! mu = 0.1         # or auto
//! k1 = synthesize  # or a matrix; k1.i per agent
//!
//! [simulation]
//! seed = 7
//! T = 30
//! substeps = 10
//! ```
//!
//! A file with a `[microgrid]` section describes the dispatch experiment
//! instead; see [`crate::scenarios::MicrogridParams`] for the keys.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{LeaderGraph, Topology};
use crate::linalg::solve_sylvester;
use crate::mat::Mat;
use crate::regulator::{Exosystem, HoldSpec, Plant};
use crate::scenarios::{MicrogridParams, MuRule, NetworkScenario, SimSettings};

#[derive(Clone, Debug)]
pub enum ScenarioConfig {
    Network(NetworkScenario),
    Microgrid {
        params: MicrogridParams,
        sim: SimSettings,
    },
}

#[derive(Debug)]
struct Entry {
    value: String,
    line: usize,
    used: bool,
}

#[derive(Debug)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn require(&mut self, key: &str, section: &str) -> Result<(String, usize)> {
        self.take(key)
            .ok_or_else(|| cfg_err(self.line, format!("[{section}] is missing `{key}`")))
    }

    fn finish(&self, section: &str) -> Result<()> {
        match self.entries.iter().find(|(_, e)| !e.used) {
            Some((k, e)) => Err(cfg_err(e.line, format!("unknown key `{k}` in [{section}]"))),
            None => Ok(()),
        }
    }
}

fn parse_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(line, "unterminated section header"))?
                .trim()
                .to_string();
            if sections.contains_key(&name) {
                return Err(cfg_err(line, format!("duplicate section [{name}]")));
            }
            sections.insert(
                name.clone(),
                Section {
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let name = current
            .as_ref()
            .ok_or_else(|| cfg_err(line, "entry before the first section header"))?;
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| cfg_err(line, "expected `key = value`"))?;
        let key = key.trim().to_string();
        let sec = sections.get_mut(name).expect("current section exists");
        if sec.entries.contains_key(&key) {
            return Err(cfg_err(line, format!("duplicate key `{key}`")));
        }
        sec.entries.insert(
            key,
            Entry {
                value: value.trim().to_string(),
                line,
                used: false,
            },
        );
    }
    Ok(sections)
}

fn mat(value: &str, line: usize) -> Result<Mat> {
    Mat::from_str(value).map_err(|e| cfg_err(line, e.to_string()))
}

fn num<T: FromStr>(value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| cfg_err(line, format!("cannot parse `{value}` as a number")))
}

fn list(value: &str, line: usize) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| num::<f64>(v.trim(), line))
        .collect()
}

fn boolean(value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(line, format!("expected true or false, got `{value}`"))),
    }
}

impl FromStr for ScenarioConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut sections = parse_sections(text)?;
        let sim = parse_simulation(&mut sections)?;
        let config = if let Some(mut mg) = sections.remove("microgrid") {
            let params = parse_microgrid(&mut mg)?;
            mg.finish("microgrid")?;
            ScenarioConfig::Microgrid {
                params,
                sim: sim.unwrap_or(SimSettings {
                    horizon: 5.0,
                    ..SimSettings::default()
                }),
            }
        } else {
            ScenarioConfig::Network(parse_network(&mut sections, sim.unwrap_or_default())?)
        };
        if let Some((name, sec)) = sections.iter().next() {
            return Err(cfg_err(sec.line, format!("unexpected section [{name}]")));
        }
        Ok(config)
    }
}

fn parse_simulation(sections: &mut BTreeMap<String, Section>) -> Result<Option<SimSettings>> {
    let Some(mut sec) = sections.remove("simulation") else {
        return Ok(None);
    };
    let mut sim = SimSettings::default();
    if let Some((v, l)) = sec.take("seed") {
        sim.seed = num(&v, l)?;
    }
    if let Some((v, l)) = sec.take("T") {
        sim.horizon = num(&v, l)?;
        if !(sim.horizon > 0.0) {
            return Err(cfg_err(l, "T must be positive"));
        }
    }
    if let Some((v, l)) = sec.take("substeps") {
        sim.substeps = num(&v, l)?;
        if sim.substeps == 0 {
            return Err(cfg_err(l, "substeps must be at least 1"));
        }
    }
    sec.finish("simulation")?;
    Ok(Some(sim))
}

fn parse_network(sections: &mut BTreeMap<String, Section>, sim: SimSettings) -> Result<NetworkScenario> {
    let mut exo_sec = sections
        .remove("exosystem")
        .ok_or_else(|| cfg_err(1, "missing [exosystem] section"))?;
    let (s, sl) = exo_sec.require("S", "exosystem")?;
    let s = mat(&s, sl)?;
    let w0 = match exo_sec.take("w0") {
        Some((v, l)) => list(&v, l)?,
        None => {
            let mut w = vec![0.0; s.rows()];
            w[0] = 1.0;
            w
        }
    };
    let exo = Exosystem::new(s, w0).map_err(|e| cfg_err(exo_sec.line, e.to_string()))?;
    exo_sec.finish("exosystem")?;

    let mut g_sec = sections
        .remove("graph")
        .ok_or_else(|| cfg_err(1, "missing [graph] section"))?;
    let topology = match g_sec.take("directed") {
        Some((v, l)) if boolean(&v, l)? => Topology::Directed,
        _ => Topology::Undirected,
    };
    let graph = match (g_sec.take("adjacency"), g_sec.take("laplacian")) {
        (Some((a, l)), None) => LeaderGraph::new(mat(&a, l)?, topology).map_err(|e| cfg_err(l, e.to_string()))?,
        (None, Some((lap, l))) => {
            let (leader, ll) = g_sec.require("leader", "graph")?;
            LeaderGraph::from_laplacian(&mat(&lap, l)?, &list(&leader, ll)?, topology)
                .map_err(|e| cfg_err(l, e.to_string()))?
        }
        _ => {
            return Err(cfg_err(
                g_sec.line,
                "[graph] needs exactly one of `adjacency` or `laplacian`",
            ))
        }
    };
    g_sec.finish("graph")?;
    let n_agents = graph.n_followers();

    let shared = sections.remove("plant");
    let mut plants = Vec::with_capacity(n_agents);
    let mut shared = shared;
    for i in 1..=n_agents {
        let name = format!("plant.{i}");
        let own = sections.remove(&name);
        let plant = match (own, shared.as_mut()) {
            (Some(mut sec), _) => {
                let p = parse_plant(&mut sec, &name, &exo)?;
                sec.finish(&name)?;
                p
            }
            (None, Some(sec)) => parse_plant(sec, "plant", &exo)?,
            (None, None) => return Err(cfg_err(1, format!("no [{name}] or [plant] section"))),
        };
        plants.push(plant);
    }
    if let Some(sec) = &shared {
        sec.finish("plant")?;
    }

    let mut d_sec = sections
        .remove("design")
        .ok_or_else(|| cfg_err(1, "missing [design] section"))?;
    let (h, hl) = d_sec.require("h", "design")?;
    let h: f64 = num(&h, hl)?;
    if !(h > 0.0) {
        return Err(cfg_err(hl, "h must be positive"));
    }
    let mu = match d_sec.take("mu") {
        None => None,
        Some((v, _)) if v == "auto" => None,
        Some((v, l)) => Some(num(&v, l)?),
    };
    let k1 = gains(&mut d_sec, "k1", n_agents)?;
    let k2 = gains(&mut d_sec, "k2", n_agents)?;
    let hold = match (d_sec.take("C_H"), d_sec.take("A_H")) {
        (None, None) => HoldSpec::ZeroOrder,
        (Some((c, cl)), Some((a, al))) => {
            HoldSpec::general(mat(&c, cl)?, mat(&a, al)?).map_err(|e| cfg_err(cl, e.to_string()))?
        }
        _ => return Err(cfg_err(d_sec.line, "a general hold needs both C_H and A_H")),
    };
    if let Some((v, l)) = d_sec.take("hold") {
        if v != "zoh" || !hold.is_zero_order() {
            return Err(cfg_err(l, "`hold` accepts only `zoh`; give C_H and A_H for a general hold"));
        }
    }
    d_sec.finish("design")?;

    Ok(NetworkScenario {
        plants,
        exo,
        graph,
        h,
        mu,
        hold,
        k1,
        k2,
        sim,
    })
}

/// `key = synthesize`, `key = <matrix>` shared by all agents, or `key.i`.
fn gains(sec: &mut Section, key: &str, n: usize) -> Result<Option<Vec<Mat>>> {
    let shared = match sec.take(key) {
        Some((v, _)) if v == "synthesize" => None,
        Some((v, l)) => Some(mat(&v, l)?),
        None => None,
    };
    let mut out = Vec::with_capacity(n);
    let mut any = shared.is_some();
    for i in 1..=n {
        match sec.take(&format!("{key}.{i}")) {
            Some((v, l)) => {
                any = true;
                out.push(Some(mat(&v, l)?));
            }
            None => out.push(shared.clone()),
        }
    }
    if !any {
        return Ok(None);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, k)| k.ok_or_else(|| cfg_err(sec.line, format!("no {key} for agent {}", i + 1))))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn parse_plant(sec: &mut Section, name: &str, exo: &Exosystem) -> Result<Plant> {
    let mut get = |k: &str| -> Result<(Mat, usize)> {
        let (v, l) = sec.require(k, name)?;
        Ok((mat(&v, l)?, l))
    };
    let (a, al) = get("A")?;
    let (b, _) = get("B")?;
    let (c, _) = get("C")?;
    let (p, _) = get("P")?;
    let (q_raw, ql) = sec.require("Q", name)?;
    if !a.is_square() {
        return Err(cfg_err(al, format!("A must be square, got {:?}", a.shape())));
    }
    let q = if q_raw == "auto" {
        let pi = solve_sylvester(&a, &exo.s, &p).map_err(|e| cfg_err(ql, format!("Q = auto: {e}")))?;
        -&c.matmul(&pi).map_err(|e| cfg_err(ql, e.to_string()))?
    } else {
        mat(&q_raw, ql)?
    };
    Plant::new(a, b, c, p, q).map_err(|e| cfg_err(sec.line, e.to_string()))
}

fn parse_microgrid(sec: &mut Section) -> Result<MicrogridParams> {
    let mut p = MicrogridParams::table1();
    let vec_keys: [(&str, fn(&mut MicrogridParams) -> &mut Vec<f64>); 4] = [
        ("alpha", |p| &mut p.alpha),
        ("beta", |p| &mut p.beta),
        ("p_r0", |p| &mut p.p_r0),
        ("a0", |p| &mut p.a0),
    ];
    for (k, field) in vec_keys {
        if let Some((v, l)) = sec.take(k) {
            *field(&mut p) = list(&v, l)?;
        }
    }
    let scalar_keys: [(&str, fn(&mut MicrogridParams) -> &mut f64); 10] = [
        ("tau_p", |p| &mut p.tau_p),
        ("tau_v", |p| &mut p.tau_v),
        ("k_p", |p| &mut p.k_p),
        ("k_q", |p| &mut p.k_q),
        ("k1", |p| &mut p.k1),
        ("k2", |p| &mut p.k2),
        ("omega_d", |p| &mut p.omega_d),
        ("v_d", |p| &mut p.v_d),
        ("dispatch_h", |p| &mut p.dispatch_h),
        ("dt", |p| &mut p.dispatch_h),
    ];
    for (k, field) in scalar_keys {
        if let Some((v, l)) = sec.take(k) {
            *field(&mut p) = num(&v, l)?;
        }
    }
    if let Some((v, l)) = sec.take("laplacian") {
        p.laplacian = mat(&v, l)?;
    }
    let rule = match sec.take("mu_rule") {
        None => MuRule::RowNormalized,
        Some((v, l)) => match v.as_str() {
            "row_normalized" => MuRule::RowNormalized,
            "literal" => MuRule::Literal,
            _ => return Err(cfg_err(l, format!("unknown mu_rule `{v}`"))),
        },
    };
    p.set_mu_rule(rule);
    if let Some((v, l)) = sec.take("mu") {
        p.mu = list(&v, l)?;
    }
    if let Some((v, l)) = sec.take("demand") {
        p.demand = v
            .split(',')
            .map(|pair| {
                let (t, val) = pair
                    .split_once(':')
                    .ok_or_else(|| cfg_err(l, format!("demand entry `{}` is not t:value", pair.trim())))?;
                Ok((num(t.trim(), l)?, num(val.trim(), l)?))
            })
            .collect::<Result<_>>()?;
    }
    p.validate().map_err(|e| cfg_err(sec.line, e.to_string()))?;
    Ok(p)
}
