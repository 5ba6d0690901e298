use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::RealField;
use serde::{Deserialize, Serialize};

use super::impacts::ImpactRecord;
use super::sensitivity::SensitivityPartition;
use super::{tc_plus, Frame, TcpOptions, TcpRun};
use crate::conv::OffsetTensor;
use crate::error::{Error, Result};
use crate::network::ComponentId;
use crate::offers::{ElementKind, FspOffer};
use crate::scalar::Scalar;
use crate::settings::{Constraints, FlexShape};
use crate::study::Study;
use crate::tt::{tt_decompose, TtTensor};

const MAGIC: &[u8; 4] = b"FATT";
const VERSION: u32 = 1;

/// Identity of an FSP offer, independent of its current setpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FspKey {
    pub kind: ElementKind,
    pub element: usize,
    pub shape: FlexShape,
    pub discrete: bool,
    pub s_max: f64,
    pub p_range: Option<(f64, f64)>,
}

impl From<&FspOffer> for FspKey {
    fn from(o: &FspOffer) -> Self {
        FspKey {
            kind: o.kind,
            element: o.element,
            shape: o.shape,
            discrete: o.discrete,
            s_max: o.s_max,
            p_range: o.p_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub topology_hash: String,
    pub fsps: Vec<FspKey>,
    pub dp: f64,
    pub dq: f64,
}

impl Fingerprint {
    pub fn of(study: &Study) -> Self {
        let (dp, dq) = study.offers.first().map_or((0.0, 0.0), |o| (o.dp, o.dq));
        Fingerprint {
            topology_hash: study.net.topology_hash(),
            fsps: study.offers.iter().map(FspKey::from).collect(),
            dp,
            dq,
        }
    }

    /// Why `other` cannot reuse tensors stored under `self`.
    pub fn mismatch(&self, other: &Fingerprint) -> Option<String> {
        if self.topology_hash != other.topology_hash {
            Some("network topology differs".into())
        } else if self.fsps != other.fsps {
            Some("FSP offers differ".into())
        } else if self.dp != other.dp || self.dq != other.dq {
            Some(format!("resolution differs: stored dp={} dq={}", self.dp, self.dq))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredComponent {
    pub component: ComponentId,
    pub file: String,
    pub origin: Vec<i64>,
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    fingerprint: Fingerprint,
    epsilon: f64,
    limits: Constraints,
    refine: usize,
    components: Vec<StoredComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredTensor {
    origin: Vec<i64>,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Estimation state persisted for later adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBundle<T> {
    pub fingerprint: Fingerprint,
    pub epsilon: f64,
    pub limits: Constraints,
    pub refine: usize,
    pub frame: Frame,
    pub ufa: OffsetTensor<T>,
    pub record: ImpactRecord,
    pub partition: SensitivityPartition,
    pub components: Vec<StoredComponent>,
    /// Compressed component tensors, aligned with `components`.
    pub tensors: Vec<TtTensor<T>>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Bundle(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<V: for<'de> Deserialize<'de>>(path: &Path) -> Result<V> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Bundle(format!("{}: {e}", path.display())))
}

/// Little-endian header (magic, version, ndim, per-core ranks and size) followed by the core values.
pub fn write_tt<T: Scalar>(path: &Path, tt: &TtTensor<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 24 * tt.ndim() + 8 * tt.storage());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tt.ndim() as u32).to_le_bytes());
    buf.extend_from_slice(&tt.epsilon.to_le_bytes());
    for k in 0..tt.ndim() {
        let (a, n, b) = tt.core_shape(k);
        for x in [a, n, b] {
            buf.extend_from_slice(&(x as u64).to_le_bytes());
        }
    }
    for core in &tt.cores {
        for v in core {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_tt<T: Scalar>(path: &Path) -> Result<TtTensor<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::Bundle(format!("{}: {why}", path.display()));
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("not a tensor train file"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad("unsupported version"));
    }
    let d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let epsilon = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let mut shape = Vec::with_capacity(d);
    let mut ranks = vec![];
    let mut sizes = Vec::with_capacity(d);
    for k in 0..d {
        let mut dims = [0usize; 3];
        for x in &mut dims {
            *x = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        }
        if k == 0 {
            ranks.push(dims[0]);
        } else if ranks[k] != dims[0] {
            return Err(bad("ranks do not chain"));
        }
        ranks.push(dims[2]);
        shape.push(dims[1]);
        sizes.push(dims.iter().product::<usize>());
    }
    let mut cores = Vec::with_capacity(d);
    for n in sizes {
        let raw = take(8 * n)?;
        cores.push(raw.chunks(8).map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap()))).collect());
    }
    let tt = TtTensor { shape, ranks, cores, epsilon };
    tt.check()?;
    Ok(tt)
}

/// Persist a finished estimate; the directory is created if needed.
pub fn write_bundle<T: Scalar + RealField>(study: &Study, run: &TcpRun<T>, epsilon: f64, dir: &Path) -> Result<TensorBundle<T>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut components = Vec::new();
    let mut tensors = Vec::new();
    for c in &run.components {
        let tt = tt_decompose(c.xi.data(), c.xi.shape(), epsilon)?;
        let file = format!("{}.tt", c.plan.component.slug());
        write_tt(&dir.join(&file), &tt)?;
        components.push(StoredComponent {
            component: c.plan.component,
            file,
            origin: c.xi.origin().to_vec(),
            ranks: tt.ranks.clone(),
        });
        tensors.push(tt);
    }
    let ufa_t = OffsetTensor::from_parts(
        run.frame.origin.clone(),
        run.frame.shape.clone(),
        run.ufa.values().to_vec(),
    )?;
    let bundle = TensorBundle {
        fingerprint: Fingerprint::of(study),
        epsilon,
        limits: study.limits,
        refine: run.refine,
        frame: run.frame.clone(),
        ufa: ufa_t,
        record: run.record.clone(),
        partition: run.partition.clone(),
        components,
        tensors,
    };
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            fingerprint: bundle.fingerprint.clone(),
            epsilon,
            limits: bundle.limits,
            refine: bundle.refine,
            components: bundle.components.clone(),
        },
    )?;
    write_json(&dir.join("axes.json"), &bundle.frame)?;
    write_json(
        &dir.join("ufa.json"),
        &StoredTensor {
            origin: bundle.ufa.origin().to_vec(),
            shape: bundle.ufa.shape().to_vec(),
            data: bundle.ufa.data().iter().map(|v| v.as_f64()).collect(),
        },
    )?;
    write_json(&dir.join("impacts.json"), &bundle.record)?;
    write_json(&dir.join("impactful.json"), &bundle.partition)?;
    Ok(bundle)
}

/// Run [`tc_plus`] and persist its state under `dir`.
pub fn save_tensors<T: Scalar + RealField>(
    study: &Study,
    opts: &TcpOptions,
    epsilon: f64,
    dir: &Path,
) -> Result<(TcpRun<T>, Result<TensorBundle<T>>)> {
    let mut run = tc_plus::<T>(study, opts)?;
    run.report.set("algorithm", "tc_plus_save_tensors");
    let t0 = std::time::Instant::now();
    let bundle = write_bundle(study, &run, epsilon, dir);
    run.report.push("tt_epsilon", epsilon);
    run.report.push("stored_components", run.components.len());
    run.report.push("store_time_s", format!("{:.3}", t0.elapsed().as_secs_f64()));
    run.report.push("store", dir.display());
    if let Ok(b) = &bundle {
        for (c, tt) in b.components.iter().zip(&b.tensors) {
            run.report.push(
                "tt",
                format!("{} ranks {:?} storing {} of {} values", c.component, tt.ranks, tt.storage(), tt.dense_len()),
            );
        }
    }
    Ok((run, bundle))
}

pub fn load_bundle<T: Scalar>(dir: &Path) -> Result<TensorBundle<T>> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    let frame: Frame = read_json(&dir.join("axes.json"))?;
    let ufa: StoredTensor = read_json(&dir.join("ufa.json"))?;
    let record: ImpactRecord = read_json(&dir.join("impacts.json"))?;
    let partition: SensitivityPartition = read_json(&dir.join("impactful.json"))?;
    let mut tensors = Vec::with_capacity(manifest.components.len());
    for c in &manifest.components {
        let path: PathBuf = dir.join(&c.file);
        let tt = read_tt(&path)?;
        if tt.ranks != c.ranks || tt.ndim() != c.origin.len() {
            return Err(Error::Bundle(format!("{} disagrees with the manifest", path.display())));
        }
        tensors.push(tt);
    }
    if manifest.components.len() != partition.retained.len() {
        return Err(Error::Bundle("component list and sensitivity partition disagree".into()));
    }
    Ok(TensorBundle {
        fingerprint: manifest.fingerprint,
        epsilon: manifest.epsilon,
        limits: manifest.limits,
        refine: manifest.refine,
        frame,
        ufa: OffsetTensor::from_parts(ufa.origin, ufa.shape, ufa.data.into_iter().map(T::of).collect())?,
        record,
        partition,
        components: manifest.components,
        tensors,
    })
}
