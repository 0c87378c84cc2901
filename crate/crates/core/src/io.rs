//! JSON and CSV formats for MDPs, ensembles, batches, policies and fitted
//! feature weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp, TransitionModel};
use crate::posterior::{ModelEnsemble, TransitionBatch};
use crate::srvi::{FeatureKind, SrviSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub s: usize,
    pub a: usize,
    pub sp: usize,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

/// An MDP together with one transition model. Omitted triples have
/// probability and reward zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub p0: Vec<f64>,
    /// Reward bound, when looser than the largest reward magnitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    pub transitions: Vec<TransitionEntry>,
}

/// A transition model without rewards, as stored in ensemble files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub transitions: Vec<TransitionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub weights: Vec<f64>,
    pub models: Vec<ModelFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyFile {
    Deterministic { actions: Vec<usize> },
    Randomized { num_actions: usize, probs: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub kind: FeatureKind,
    pub dimension: usize,
    pub weights: Vec<f64>,
}

fn input(e: Error) -> Error {
    match e {
        Error::Argument(m) => Error::Input(m),
        other => other,
    }
}

fn check_entry(e: &TransitionEntry, ns: usize, na: usize) -> Result<()> {
    if e.s >= ns || e.a >= na || e.sp >= ns {
        return Err(Error::Input(format!("transition (s={}, a={}, sp={}) out of range", e.s, e.a, e.sp)));
    }
    Ok(())
}

fn dense_probs(entries: &[TransitionEntry], ns: usize, na: usize) -> Result<Vec<f64>> {
    let mut probs = vec![0.0; ns * na * ns];
    for e in entries {
        check_entry(e, ns, na)?;
        probs[(e.s * na + e.a) * ns + e.sp] += e.p;
    }
    Ok(probs)
}

/// Rows that already sum to one within tolerance are kept bit-for-bit;
/// rows with small drift are renormalized.
fn load_model(ns: usize, na: usize, probs: Vec<f64>) -> Result<TransitionModel> {
    TransitionModel::new(ns, na, probs.clone())
        .or_else(|_| TransitionModel::normalized(ns, na, probs))
        .map_err(input)
}

fn sparse_entries(model: &TransitionModel, rewards: Option<&[f64]>) -> Vec<TransitionEntry> {
    let (ns, na) = (model.num_states(), model.num_actions());
    let mut out = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            for sp in 0..ns {
                let i = (s * na + a) * ns + sp;
                let p = model.probs()[i];
                let r = rewards.map(|r| r[i]);
                if p != 0.0 || r.is_some_and(|r| r != 0.0) {
                    out.push(TransitionEntry { s, a, sp, p, r });
                }
            }
        }
    }
    out
}

impl MdpFile {
    pub fn from_parts(mdp: &TabularMdp, model: &TransitionModel) -> Self {
        let default_bound = mdp.reward_tensor().iter().fold(0.0f64, |m, r| m.max(r.abs()));
        MdpFile {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            gamma: mdp.discount(),
            p0: mdp.initial_dist().to_vec(),
            r_max: (mdp.r_max() != default_bound).then_some(mdp.r_max()),
            transitions: sparse_entries(model, Some(mdp.reward_tensor())),
        }
    }

    pub fn into_parts(self) -> Result<(TabularMdp, TransitionModel)> {
        let (ns, na) = (self.num_states, self.num_actions);
        let mut reward = vec![0.0; ns * na * ns];
        for e in &self.transitions {
            check_entry(e, ns, na)?;
            if let Some(r) = e.r {
                reward[(e.s * na + e.a) * ns + e.sp] = r;
            }
        }
        let probs = dense_probs(&self.transitions, ns, na)?;
        let model = load_model(ns, na, probs)?;
        let mut mdp = TabularMdp::new(ns, na, reward, self.gamma, self.p0).map_err(input)?;
        if let Some(b) = self.r_max {
            mdp = mdp.with_r_max(b).map_err(input)?;
        }
        Ok((mdp, model))
    }
}

impl ModelFile {
    pub fn from_model(model: &TransitionModel) -> Self {
        ModelFile {
            num_states: model.num_states(),
            num_actions: model.num_actions(),
            transitions: sparse_entries(model, None),
        }
    }

    pub fn into_model(self) -> Result<TransitionModel> {
        let probs = dense_probs(&self.transitions, self.num_states, self.num_actions)?;
        load_model(self.num_states, self.num_actions, probs)
    }
}

impl EnsembleFile {
    pub fn from_ensemble(e: &ModelEnsemble) -> Self {
        EnsembleFile { weights: e.weights().to_vec(), models: e.models().iter().map(ModelFile::from_model).collect() }
    }

    pub fn into_ensemble(self) -> Result<ModelEnsemble> {
        let models = self.models.into_iter().map(ModelFile::into_model).collect::<Result<Vec<_>>>()?;
        ModelEnsemble::new(models, self.weights).map_err(input)
    }
}

impl PolicyFile {
    pub fn from_policy(p: &Policy) -> Self {
        match p {
            Policy::Deterministic(a) => PolicyFile::Deterministic { actions: a.clone() },
            Policy::Randomized { num_actions, probs } => PolicyFile::Randomized {
                num_actions: *num_actions,
                probs: probs.chunks(*num_actions).map(<[f64]>::to_vec).collect(),
            },
        }
    }

    pub fn into_policy(self) -> Result<Policy> {
        match self {
            PolicyFile::Deterministic { actions } => Ok(Policy::Deterministic(actions)),
            PolicyFile::Randomized { num_actions, probs } => {
                if probs.iter().any(|row| row.len() != num_actions) {
                    return Err(Error::Input(format!("policy rows must have {num_actions} entries")));
                }
                Policy::randomized(num_actions, probs.concat()).map_err(input)
            }
        }
    }
}

impl WeightsFile {
    pub fn from_solution(kind: FeatureKind, sol: &SrviSolution) -> Self {
        WeightsFile { kind, dimension: sol.weights.len(), weights: sol.weights.clone() }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut text = String::new();
    let file = File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    BufReader::new(file).read_to_string(&mut text)?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_mdp(path: &Path) -> Result<(TabularMdp, TransitionModel)> {
    read_json::<MdpFile>(path)?.into_parts()
}

pub fn load_ensemble(path: &Path) -> Result<ModelEnsemble> {
    read_json::<EnsembleFile>(path)?.into_ensemble()
}

pub fn load_policy(path: &Path) -> Result<Policy> {
    read_json::<PolicyFile>(path)?.into_policy()
}

#[derive(Debug, Serialize, Deserialize)]
struct BatchRow {
    s: usize,
    a: usize,
    sp: usize,
}

pub fn write_batch<W: Write>(writer: W, batch: &TransitionBatch) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for &(s, a, sp) in batch.samples() {
        w.serialize(BatchRow { s, a, sp })?;
    }
    if batch.is_empty() {
        w.write_record(["s", "a", "sp"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_batch<R: Read>(reader: R, num_states: usize, num_actions: usize) -> Result<TransitionBatch> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["s", "a", "sp"] {
        return Err(Error::Input(format!("batch header must be s,a,sp, got {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut samples = Vec::new();
    for row in r.deserialize() {
        let BatchRow { s, a, sp } = row.map_err(|e| Error::Input(format!("batch row: {e}")))?;
        samples.push((s, a, sp));
    }
    TransitionBatch::new(num_states, num_actions, samples).map_err(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;
    use crate::mdp::tests::random_policy;

    #[test]
    fn mdp_round_trip() {
        let (mdp, model) = domains::riverswim();
        let text = serde_json::to_string(&MdpFile::from_parts(&mdp, &model)).unwrap();
        let (m2, p2) = serde_json::from_str::<MdpFile>(&text).unwrap().into_parts().unwrap();
        assert_eq!(m2, mdp);
        assert_eq!(p2, model);

        let (inv, im) = domains::inventory(&domains::InventorySpec { capacity: 4, max_order: 2, demand_max: 4, ..Default::default() }, 1.5).unwrap();
        let text = serde_json::to_string(&MdpFile::from_parts(&inv, &im)).unwrap();
        let (m2, _) = serde_json::from_str::<MdpFile>(&text).unwrap().into_parts().unwrap();
        assert_eq!(m2.r_max(), inv.r_max());
    }

    #[test]
    fn bad_row_is_reported() {
        let text = r#"{"num_states":2,"num_actions":1,"gamma":0.9,"p0":[1,0],
            "transitions":[{"s":0,"a":0,"sp":0,"p":1.0},{"s":1,"a":0,"sp":0,"p":0.5}]}"#;
        let err = serde_json::from_str::<MdpFile>(text).unwrap().into_parts().unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert!(err.to_string().contains("s=1, a=0"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let text = r#"{"num_states":1,"num_actions":1,"gamma":0.9,"p0":[1],"transitions":[{"s":0,"a":3,"sp":0,"p":1.0}]}"#;
        assert!(serde_json::from_str::<MdpFile>(text).unwrap().into_parts().is_err());
    }

    #[test]
    fn ensemble_and_policy_round_trip() {
        let (_, m1) = domains::random_dirichlet_mdp(3, 2, 1).unwrap();
        let (_, m2) = domains::random_dirichlet_mdp(3, 2, 2).unwrap();
        let e = ModelEnsemble::new(vec![m1, m2], vec![0.25, 0.75]).unwrap();
        let text = serde_json::to_string(&EnsembleFile::from_ensemble(&e)).unwrap();
        assert_eq!(serde_json::from_str::<EnsembleFile>(&text).unwrap().into_ensemble().unwrap(), e);

        for p in [Policy::Deterministic(vec![1, 0, 1]), random_policy(3, 2, 4)] {
            let text = serde_json::to_string(&PolicyFile::from_policy(&p)).unwrap();
            assert_eq!(serde_json::from_str::<PolicyFile>(&text).unwrap().into_policy().unwrap(), p);
        }
        let bad = r#"{"kind":"randomized","num_actions":2,"probs":[[0.5,0.6]]}"#;
        assert!(matches!(serde_json::from_str::<PolicyFile>(bad).unwrap().into_policy(), Err(Error::Input(_))));
    }

    #[test]
    fn batch_csv_round_trip() {
        let b = TransitionBatch::new(3, 2, vec![(0, 1, 2), (2, 0, 0), (1, 1, 1)]).unwrap();
        let mut buf = Vec::new();
        write_batch(&mut buf, &b).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("s,a,sp\n0,1,2\n"));
        let back = read_batch(buf.as_slice(), 3, 2).unwrap();
        assert_eq!(back.samples(), b.samples());
        assert!(read_batch("x,y\n1,2\n".as_bytes(), 3, 2).is_err());
        assert!(read_batch("s,a,sp\n0,0,7\n".as_bytes(), 3, 2).is_err());
    }
}
