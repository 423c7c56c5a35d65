use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::base::{all_finite, apply_constraints, Constraints, Hyperparams};
use crate::dsl::{emit_code, program_from_model};
use crate::error::{Error, Result};
use crate::learners::{Learner, Template, TreeInit, MAX_TREE_HEIGHT, REWARD_CLIP};
use crate::tree::AnnealSchedule;

/// Format tag written at the top of every store file.
pub const STORE_FORMAT: &str = "pbr-store/1";

/// Everything needed to create an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub param_name: String,
    pub template: Template,
    #[serde(default)]
    pub feature_names: Vec<String>,
    #[serde(default = "one")]
    pub m: usize,
    /// One entry per output, or empty for none.
    #[serde(default)]
    pub constraints: Vec<Constraints>,
    /// Flat initial parameters; zeros (random predicates for trees) if absent.
    #[serde(default)]
    pub init_values: Option<Vec<f64>>,
    #[serde(default)]
    pub hyperparams: Option<Hyperparams>,
    #[serde(default)]
    pub schedule: Option<AnnealSchedule>,
    #[serde(default)]
    pub tree_init: Option<TreeInit>,
}

fn one() -> usize {
    1
}

impl InstanceSpec {
    pub fn new(param_name: &str, template: Template, feature_names: &[&str], m: usize) -> Self {
        Self {
            param_name: param_name.to_string(),
            template,
            feature_names: feature_names.iter().map(|s| s.to_string()).collect(),
            m,
            constraints: Vec::new(),
            init_values: None,
            hyperparams: None,
            schedule: None,
            tree_init: None,
        }
    }

    pub fn p(&self) -> usize {
        self.feature_names.len()
    }

    fn learner(&self) -> Result<Learner> {
        let p = self.p();
        if let Template::Tree { height } = self.template {
            if height > MAX_TREE_HEIGHT {
                return Err(Error::HeightCap {
                    height,
                    cap: MAX_TREE_HEIGHT,
                });
            }
        }
        if !self.constraints.is_empty() && self.constraints.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                actual: self.constraints.len(),
            });
        }
        for c in &self.constraints {
            c.validate()?;
        }
        let hp = self
            .hyperparams
            .clone()
            .unwrap_or_else(|| Hyperparams::defaults(self.m));
        Learner::build(
            self.template,
            p,
            self.m,
            hp,
            self.init_values.as_deref(),
            self.tree_init.unwrap_or_default(),
            self.schedule.clone().unwrap_or_default(),
        )
    }
}

/// One `predict` call and, once assigned, its reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub id: u64,
    pub features: Vec<f64>,
    /// The decision returned to the client (after constraints).
    pub decision: Vec<f64>,
    pub perturbation: Vec<f64>,
    pub model_version: u64,
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub spec: InstanceSpec,
    pub model_version: u64,
    /// State at version 0; refresh replays the log from here.
    initial: Learner,
    /// Current parameters and the live perturbation stream.
    learner: Learner,
    pub log: Vec<Invocation>,
}

impl Instance {
    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn rewarded(&self) -> usize {
        self.log.iter().filter(|r| r.reward.is_some()).count()
    }

    fn refresh(&mut self) -> Result<()> {
        let mut next = self.initial.clone();
        for rec in self.log.iter() {
            if let Some(r) = rec.reward {
                next.apply(
                    &rec.features,
                    &rec.perturbation,
                    r.clamp(-REWARD_CLIP, REWARD_CLIP),
                )?;
            }
        }
        std::mem::swap(next.rng_mut(), self.learner.rng_mut());
        self.learner = next;
        self.model_version += 1;
        Ok(())
    }

    pub fn expr_tree(&self) -> Result<String> {
        let names = &self.spec.feature_names;
        emit_code(
            &program_from_model(&self.learner.model(), names.len()),
            Some(names),
        )
    }
}

/// All instances and their logs; the unit of persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Store {
    format: String,
    next_id: u64,
    instances: Vec<Instance>,
}

impl Default for Store {
    fn default() -> Self {
        Self {
            format: STORE_FORMAT.to_string(),
            next_id: 0,
            instances: Vec::new(),
        }
    }
}

impl Store {
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Tag {
            format: Option<String>,
        }
        let tag: Tag = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if tag.format.as_deref() != Some(STORE_FORMAT) {
            return Err(Error::Format(format!(
                "expected format {STORE_FORMAT:?}, found {:?}",
                tag.format.unwrap_or_default()
            )));
        }
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("store is serializable");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_json().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn instance(&self, id: u64) -> Result<&Instance> {
        self.instances
            .iter()
            .find(|i| i.id == id)
            .ok_or_else(|| Error::Session(format!("unknown instance {id}")))
    }

    fn instance_mut(&mut self, id: u64) -> Result<&mut Instance> {
        self.instances
            .iter_mut()
            .find(|i| i.id == id)
            .ok_or_else(|| Error::Session(format!("unknown instance {id}")))
    }

    pub fn create(&mut self, spec: InstanceSpec) -> Result<u64> {
        if self
            .instances
            .iter()
            .any(|i| i.spec.param_name == spec.param_name)
        {
            return Err(Error::Session(format!(
                "instance {:?} already exists",
                spec.param_name
            )));
        }
        // names must be emittable
        let probe = crate::dsl::ImpProgram {
            p: spec.p(),
            m: 1,
            body: crate::dsl::Stmt::assign(0, crate::dsl::Expr::constant(spec.p(), 0.0)),
        };
        emit_code(&probe, Some(&spec.feature_names))?;
        let learner = spec.learner()?;
        let id = self.next_id;
        self.next_id += 1;
        self.instances.push(Instance {
            id,
            spec,
            model_version: 0,
            initial: learner.clone(),
            learner,
            log: Vec::new(),
        });
        Ok(id)
    }

    pub fn connect(&self, id: u64) -> Result<Handle> {
        self.instance(id)?;
        Ok(Handle {
            instance: id,
            cache: None,
        })
    }

    /// Evaluates the handle's cached model at `features`, perturbs, applies
    /// constraints and logs the invocation.
    pub fn predict(&mut self, handle: &mut Handle, features: &[f64]) -> Result<(u64, Vec<f64>)> {
        let inst = self.instance_mut(handle.instance)?;
        if features.len() != inst.spec.p() {
            return Err(Error::DimensionMismatch {
                expected: inst.spec.p(),
                actual: features.len(),
            });
        }
        if !all_finite(features) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        if handle
            .cache
            .as_ref()
            .is_none_or(|(v, _)| *v != inst.model_version)
        {
            handle.cache = Some((inst.model_version, inst.learner.clone()));
        }
        let (version, snapshot) = handle.cache.as_ref().expect("cache populated");
        let a = snapshot.decide(features)?;
        let u = inst.learner.sample_perturbation();
        let delta = inst.learner.hyperparams().delta;
        let decision: Vec<f64> = a
            .iter()
            .zip(&u)
            .enumerate()
            .map(|(k, (a, u))| {
                let v = a + delta * u;
                inst.spec
                    .constraints
                    .get(k)
                    .map_or(v, |c| apply_constraints(v, c))
            })
            .collect();
        let id = inst.log.len() as u64;
        inst.log.push(Invocation {
            id,
            features: features.to_vec(),
            decision: decision.clone(),
            perturbation: u,
            model_version: *version,
            reward: None,
        });
        Ok((id, decision))
    }

    pub fn assign_reward(&mut self, handle: &Handle, invocation: u64, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "reward must be finite, got {reward}"
            )));
        }
        let inst = self.instance_mut(handle.instance)?;
        let rec = inst
            .log
            .get_mut(invocation as usize)
            .ok_or_else(|| Error::Session(format!("unknown invocation {invocation}")))?;
        if rec.reward.is_some() {
            return Err(Error::Session(format!(
                "invocation {invocation} already has a reward"
            )));
        }
        rec.reward = Some(reward);
        Ok(())
    }

    /// Relearns from all rewarded invocations and returns the new version.
    pub fn refresh(&mut self, handle: &mut Handle) -> Result<u64> {
        let inst = self.instance_mut(handle.instance)?;
        inst.refresh()?;
        handle.cache = None;
        Ok(inst.model_version)
    }

    pub fn get_expr_tree(&self, handle: &Handle) -> Result<String> {
        self.instance(handle.instance)?.expr_tree()
    }

    pub fn summary(&self) -> Vec<InstanceSummary> {
        self.instances
            .iter()
            .map(|i| InstanceSummary {
                id: i.id,
                param_name: i.spec.param_name.clone(),
                template: i.spec.template.name(),
                model_version: i.model_version,
                invocations: i.log.len(),
                rewarded: i.rewarded(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceSummary {
    pub id: u64,
    pub param_name: String,
    pub template: String,
    pub model_version: u64,
    pub invocations: usize,
    pub rewarded: usize,
}

/// A connection to one instance with its own cached model snapshot.
#[derive(Debug, Clone)]
pub struct Handle {
    instance: u64,
    cache: Option<(u64, Learner)>,
}

impl Handle {
    pub fn instance(&self) -> u64 {
        self.instance
    }

    /// Model version of the cached snapshot, if any.
    pub fn cached_version(&self) -> Option<u64> {
        self.cache.as_ref().map(|(v, _)| *v)
    }
}

/// A [`Store`] bound to a file: every mutation is saved before returning,
/// and `connect` re-reads the file, which is the source of truth.
#[derive(Debug)]
pub struct Session {
    path: Option<PathBuf>,
    store: Store,
}

impl Session {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            store: Store::default(),
        }
    }

    /// Opens `path`, creating an empty store file if none exists.
    pub fn open_or_create(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::open(path)
        } else {
            let s = Self {
                path: Some(path.to_path_buf()),
                store: Store::default(),
            };
            s.persist()?;
            Ok(s)
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            path: Some(path.to_path_buf()),
            store: Store::load(path)?,
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn persist(&self) -> Result<()> {
        match &self.path {
            Some(p) => self.store.save(p),
            None => Ok(()),
        }
    }

    /// Runs `f` on a copy of the store and commits it only if both `f` and
    /// the save succeed.
    fn mutate<T>(&mut self, f: impl FnOnce(&mut Store) -> Result<T>) -> Result<T> {
        let mut next = self.store.clone();
        let out = f(&mut next)?;
        if let Some(p) = &self.path {
            next.save(p)?;
        }
        self.store = next;
        Ok(out)
    }

    pub fn create(&mut self, spec: InstanceSpec) -> Result<u64> {
        self.mutate(|s| s.create(spec))
    }

    pub fn connect(&mut self, id: u64) -> Result<Handle> {
        if let Some(p) = &self.path {
            self.store = Store::load(p)?;
        }
        self.store.connect(id)
    }

    pub fn predict(&mut self, handle: &mut Handle, features: &[f64]) -> Result<(u64, Vec<f64>)> {
        self.mutate(|s| s.predict(handle, features))
    }

    pub fn assign_reward(&mut self, handle: &Handle, invocation: u64, reward: f64) -> Result<()> {
        self.mutate(|s| s.assign_reward(handle, invocation, reward))
    }

    pub fn refresh(&mut self, handle: &mut Handle) -> Result<u64> {
        self.mutate(|s| s.refresh(handle))
    }

    pub fn get_expr_tree(&self, handle: &Handle) -> Result<String> {
        self.store.get_expr_tree(handle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_spec(name: &str) -> InstanceSpec {
        InstanceSpec::new(name, Template::Const, &[], 1)
    }

    fn det(mut spec: InstanceSpec) -> InstanceSpec {
        // δ tiny so decisions sit at the model value
        let mut hp = Hyperparams::defaults(spec.m);
        hp.delta = 1e-12;
        spec.hyperparams = Some(hp);
        spec
    }

    #[test]
    fn fresh_const_predicts_init() {
        let mut s = Store::default();
        let id = s.create(det(const_spec("a"))).unwrap();
        let mut h = s.connect(id).unwrap();
        let (i0, d0) = s.predict(&mut h, &[]).unwrap();
        let (i1, _) = s.predict(&mut h, &[]).unwrap();
        assert_eq!((i0, i1), (0, 1));
        assert!(d0[0].abs() < 1e-9);
        assert_eq!(s.instance(id).unwrap().log[0].model_version, 0);
    }

    #[test]
    fn shapes_and_duplicates() {
        let mut s = Store::default();
        let lin = s
            .create(InstanceSpec::new("lin", Template::Linear, &["a", "b"], 1))
            .unwrap();
        assert_eq!(s.instance(lin).unwrap().learner().params().len(), 3);
        let tree = s
            .create(InstanceSpec::new(
                "t",
                Template::Tree { height: 2 },
                &["a", "b"],
                1,
            ))
            .unwrap();
        assert_eq!(s.instance(tree).unwrap().learner().params().len(), 21);
        assert!(matches!(
            s.create(const_spec("lin")),
            Err(Error::Session(_))
        ));
        let tall = InstanceSpec::new("tall", Template::Tree { height: 13 }, &["a"], 1);
        assert!(matches!(s.create(tall), Err(Error::HeightCap { .. })));
        let bad_names = InstanceSpec::new("bad", Template::Linear, &["a", "a"], 1);
        assert!(s.create(bad_names).is_err());
        assert!(s.connect(99).is_err());
    }

    #[test]
    fn reward_write_once() {
        let mut s = Store::default();
        let id = s.create(const_spec("a")).unwrap();
        let mut h = s.connect(id).unwrap();
        for _ in 0..6 {
            s.predict(&mut h, &[]).unwrap();
        }
        s.assign_reward(&h, 5, -1.0).unwrap();
        s.assign_reward(&h, 0, -2.0).unwrap();
        assert!(s.assign_reward(&h, 0, -3.0).is_err());
        assert!(s.assign_reward(&h, 1, f64::NAN).is_err());
        assert!(s.assign_reward(&h, 9, 0.0).is_err());
        assert_eq!(s.instance(id).unwrap().rewarded(), 2);
    }

    #[test]
    fn refresh_bumps_version_and_invalidates_caches() {
        let mut s = Store::default();
        let id = s.create(const_spec("a")).unwrap();
        let mut h1 = s.connect(id).unwrap();
        let mut h2 = s.connect(id).unwrap();
        s.predict(&mut h2, &[]).unwrap();
        let before = s.instance(id).unwrap().learner().params();
        assert_eq!(s.refresh(&mut h1).unwrap(), 1);
        assert_eq!(s.instance(id).unwrap().learner().params(), before);
        let (i, _) = s.predict(&mut h1, &[]).unwrap();
        s.assign_reward(&h1, i, 1.0).unwrap();
        s.refresh(&mut h1).unwrap();
        assert_ne!(s.instance(id).unwrap().learner().params(), before);
        assert_eq!(h2.cached_version(), Some(0));
        let (j, _) = s.predict(&mut h2, &[]).unwrap();
        assert_eq!(h2.cached_version(), Some(2));
        assert_eq!(s.instance(id).unwrap().log[j as usize].model_version, 2);
    }

    #[test]
    fn constraints_apply_to_decisions() {
        let mut s = Store::default();
        let mut spec = det(const_spec("c"));
        spec.init_values = Some(vec![3.6]);
        spec.constraints = vec![Constraints {
            min: Some(0.0),
            max: Some(10.0),
            is_int: true,
        }];
        let id = s.create(spec).unwrap();
        let mut h = s.connect(id).unwrap();
        assert_eq!(s.predict(&mut h, &[]).unwrap().1, vec![4.0]);
    }

    #[test]
    fn expr_tree_text() {
        let mut s = Store::default();
        let mut spec = const_spec("five");
        spec.init_values = Some(vec![5.0]);
        let id = s.create(spec).unwrap();
        let h = s.connect(id).unwrap();
        assert!(s.get_expr_tree(&h).unwrap().contains("return 5;"));
        let mut lin = InstanceSpec::new("lin", Template::Linear, &["selection", "lines"], 1);
        lin.init_values = Some(vec![0.5, 2.0, 0.0]);
        let id = s.create(lin).unwrap();
        let h = s.connect(id).unwrap();
        let text = s.get_expr_tree(&h).unwrap();
        assert!(
            text.contains("return 0.5 * selection + 2 * lines;"),
            "{text}"
        );
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        let mut sess = Session::open_or_create(&path).unwrap();
        let id = sess
            .create(InstanceSpec::new(
                "t",
                Template::Tree { height: 1 },
                &["a"],
                1,
            ))
            .unwrap();
        let mut h = sess.connect(id).unwrap();
        let (i, _) = sess.predict(&mut h, &[0.3]).unwrap();
        sess.assign_reward(&h, i, -0.25).unwrap();
        sess.refresh(&mut h).unwrap();
        let first = fs::read(&path).unwrap();
        let loaded = Store::load(&path).unwrap();
        assert_eq!(&loaded, sess.store());
        loaded.save(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);

        let mut again = Session::open(&path).unwrap();
        let h2 = again.connect(id).unwrap();
        assert_eq!(h2.instance(), id);
        assert_eq!(again.store().instance(id).unwrap().model_version, 1);
        fs::remove_file(&path).unwrap();
        assert!(again.connect(id).is_err());
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(Store::from_json("{}"), Err(Error::Format(_))));
        assert!(matches!(
            Store::from_json("not json"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            Store::from_json(r#"{"format": "pbr-store/9"}"#),
            Err(Error::Format(_))
        ));
        let s = Store::default();
        assert_eq!(Store::from_json(&s.to_json()).unwrap(), s);
    }
}
