//! Binary checkpoints: magic "LOGN", a version word, the architecture
//! descriptor, every parameter tensor as length-prefixed little-endian
//! 64-bit reals in row-major order, both optimisers' state, the random
//! state snapshot and the step counter. Round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use logan_core::models::{init_model, Activation, GanModel, MlpSpec};
use logan_core::train::{OptimiserState, TrainerState};
use logan_core::Tensor;

pub const MAGIC: &[u8; 4] = b"LOGN";
pub const VERSION: u32 = 1;

#[derive(Debug)]
pub struct Checkpoint {
    pub model: GanModel,
    pub state: TrainerState,
}

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        self.out.write_all(&[v])?;
        Ok(())
    }
    fn u16(&mut self, v: u16) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        self.u64(vs.len() as u64)?;
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }
    fn name(&mut self, s: &str) -> Result<()> {
        self.u16(u16::try_from(s.len()).context("name too long")?)?;
        self.out.write_all(s.as_bytes())?;
        Ok(())
    }
    fn spec(&mut self, spec: &MlpSpec) -> Result<()> {
        match spec.activation {
            Activation::LeakyRelu { slope } => {
                self.u8(0)?;
                self.f64(slope)?;
            }
            Activation::Tanh => {
                self.u8(1)?;
                self.f64(0.0)?;
            }
        }
        self.u32(spec.widths.len() as u32)?;
        for w in &spec.widths {
            self.u32(*w as u32)?;
        }
        Ok(())
    }
    fn optimiser(&mut self, state: &OptimiserState) -> Result<()> {
        match state {
            OptimiserState::Sgd => self.u8(0),
            OptimiserState::Adam { t, m, v } => {
                self.u8(1)?;
                self.u64(*t)?;
                self.u32(m.len() as u32)?;
                for vec in m {
                    self.f64s(vec)?;
                }
                self.u32(v.len() as u32)?;
                for vec in v {
                    self.f64s(vec)?;
                }
                Ok(())
            }
        }
    }
}

struct Reader<R: Read> {
    input: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.input.read_exact(&mut buf)?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > (1 << 28) {
            bail!("implausible tensor length {n}");
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn name(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        Ok(String::from_utf8(self.bytes(n)?)?)
    }
    fn spec(&mut self) -> Result<MlpSpec> {
        let tag = self.u8()?;
        let slope = self.f64()?;
        let count = self.u32()? as usize;
        let widths: Vec<usize> = (0..count)
            .map(|_| self.u32().map(|w| w as usize))
            .collect::<Result<_>>()?;
        let activation = match tag {
            0 => Activation::LeakyRelu { slope },
            1 => Activation::Tanh,
            other => bail!("unknown activation tag {other}"),
        };
        let spec = MlpSpec { widths, activation };
        spec.validate()?;
        Ok(spec)
    }
    fn optimiser(&mut self) -> Result<OptimiserState> {
        match self.u8()? {
            0 => Ok(OptimiserState::Sgd),
            1 => {
                let t = self.u64()?;
                let mc = self.u32()? as usize;
                let m: Vec<Vec<f64>> = (0..mc).map(|_| self.f64s()).collect::<Result<_>>()?;
                let vc = self.u32()? as usize;
                let v: Vec<Vec<f64>> = (0..vc).map(|_| self.f64s()).collect::<Result<_>>()?;
                Ok(OptimiserState::Adam { t, m, v })
            }
            other => bail!("unknown optimiser tag {other}"),
        }
    }
}

pub fn save(path: &Path, model: &GanModel, state: &TrainerState) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::File::create(path)
        .with_context(|| format!("cannot create checkpoint {}", path.display()))?;
    let mut w = Writer {
        out: std::io::BufWriter::new(file),
    };
    w.out.write_all(MAGIC)?;
    w.u32(VERSION)?;
    w.u32(model.latent_dim() as u32)?;
    w.u32(model.data_dim() as u32)?;
    w.spec(model.gen_spec())?;
    w.spec(model.disc_spec())?;
    w.u32(model.params().len() as u32)?;
    for (name, tensor) in model.params() {
        w.name(name)?;
        w.u32(tensor.shape().len() as u32)?;
        for d in tensor.shape() {
            w.u32(*d as u32)?;
        }
        w.f64s(tensor.data())?;
    }
    w.u64(state.step)?;
    for word in state.rng {
        w.u64(word)?;
    }
    w.optimiser(&state.opt_d)?;
    w.optimiser(&state.opt_g)?;
    w.out.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("cannot open checkpoint {}", path.display()))?;
    let mut r = Reader {
        input: std::io::BufReader::new(file),
    };
    let magic = r.bytes(4)?;
    if magic != MAGIC {
        bail!("not a checkpoint file (bad magic {magic:02x?})");
    }
    let version = r.u32()?;
    if version != VERSION {
        bail!("checkpoint format version {version} is not supported (expected {VERSION})");
    }
    let latent_dim = r.u32()? as usize;
    let data_dim = r.u32()? as usize;
    let gen_spec = r.spec()?;
    let disc_spec = r.spec()?;
    let mut model = init_model(gen_spec, disc_spec, latent_dim, data_dim, 0)?;

    let n_params = r.u32()? as usize;
    if n_params != model.params().len() {
        bail!(
            "checkpoint stores {n_params} tensors, architecture implies {}",
            model.params().len()
        );
    }
    for _ in 0..n_params {
        let name = r.name()?;
        let ndim = r.u32()? as usize;
        let shape: Vec<usize> = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<_>>()?;
        let data = r.f64s()?;
        let tensor = Tensor::new(shape, data).context("corrupt parameter tensor")?;
        model
            .set_param(&name, tensor)
            .with_context(|| format!("checkpoint parameter `{name}` does not fit the model"))?;
    }

    let step = r.u64()?;
    let rng = [r.u64()?, r.u64()?, r.u64()?, r.u64()?];
    let opt_d = r.optimiser()?;
    let opt_g = r.optimiser()?;
    Ok(Checkpoint {
        model,
        state: TrainerState {
            step,
            rng,
            opt_d,
            opt_g,
        },
    })
}
