//! Binary model checkpoints. The layout is documented in `docs/formats.md`.

use std::fs;
use std::path::Path;

use crate::baseline_grids::{DirectionMap, DirectionalGrid, GridEncodingConfig, HashGrid};
use crate::encoding::ParamTable;
use crate::error::{Error, Result};
use crate::hashing::HashConfig;
use crate::joint_encoding::{HashGridSphere, JointConfig};
use crate::model::{EncoderKind, Model, ModelEncoder, ModelMeta};
use crate::nn::{Activation, Mlp, MlpConfig, OutputActivation};
use crate::scalar::Real;
use crate::sphere_encoding::{HashSphere, HashSphereConfig};

pub const MAGIC: &[u8; 8] = b"HSPHCKPT";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32s(&mut self, v: &[u32]) {
        v.iter().for_each(|&x| self.u32(x));
    }
    fn hash(&mut self, h: &HashConfig) {
        self.u32(h.gamma);
        self.u32s(&h.primes_sphere);
        self.u32s(&h.primes_joint_spatial);
        self.u32s(&h.primes_joint_dir);
        self.u32(h.table_cap);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!("checkpoint ends inside {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.bytes(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8, what)?.try_into().unwrap()))
    }
    fn u32x3(&mut self, what: &str) -> Result<[u32; 3]> {
        Ok([self.u32(what)?, self.u32(what)?, self.u32(what)?])
    }
    fn f64x3(&mut self, what: &str) -> Result<[f64; 3]> {
        Ok([self.f64(what)?, self.f64(what)?, self.f64(what)?])
    }
    fn hash(&mut self) -> Result<HashConfig> {
        Ok(HashConfig {
            gamma: self.u32("hash config")?,
            primes_sphere: self.u32x3("hash config")?,
            primes_joint_spatial: self.u32x3("hash config")?,
            primes_joint_dir: self.u32x3("hash config")?,
            table_cap: self.u32("hash config")?,
        })
    }
    /// `count` scalars, checking the remaining length first.
    fn scalars<T: Real>(&mut self, count: u64, what: &str) -> Result<Vec<T>> {
        let n = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(T::BYTES))
            .ok_or_else(|| Error::SizeMismatch(format!("{what} length {count}")))?;
        let raw = self.bytes(n, what)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

pub fn encode_checkpoint<T: Real>(model: &Model<T>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u8(T::BYTES as u8);
    w.u8(model.kind().code());
    match &model.encoder {
        ModelEncoder::Sphere(e) => {
            let c = e.config();
            w.u32(c.levels);
            w.u32(c.features as u32);
            w.hash(&c.hash);
        }
        ModelEncoder::Grid(e) => {
            let c = e.config();
            w.u8(c.dims as u8);
            w.u32(c.base_resolution);
            w.f64(c.scale);
            w.u32(c.levels);
            w.u32(c.features as u32);
            w.u32(c.table_cap);
            w.u32s(&c.primes);
        }
        ModelEncoder::Joint(e) => {
            let c = e.config();
            w.u32(c.levels);
            w.u32(c.base_resolution);
            w.f64(c.scale);
            w.u32(c.dir_level_cap);
            w.u32(c.features as u32);
            w.hash(&c.hash);
            c.bounds_min.iter().for_each(|&v| w.f64(v));
            c.bounds_max.iter().for_each(|&v| w.f64(v));
        }
    }
    let tables = model.encoder.tables();
    w.u32(tables.len() as u32);
    for t in tables {
        w.u64(t.rows() as u64);
        w.u32(t.features() as u32);
        t.values().iter().for_each(|&v| v.write_le(&mut w.0));
    }
    let m = model.mlp.config();
    w.u32(m.input_width as u32);
    w.u32(m.hidden_layers as u32);
    w.u32(m.hidden_width as u32);
    w.u8(m.hidden_activation.code());
    w.u8(m.output_activation.code());
    w.u32(m.output_width as u32);
    w.u64(model.mlp.parameter_count() as u64);
    model.mlp.params().iter().for_each(|&v| v.write_le(&mut w.0));
    w.u64(model.meta.seed);
    w.u64(model.meta.steps);
    w.0
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Model<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.bytes(8, "magic").map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Version { found: version, expected: VERSION });
    }
    let scalar_bytes = r.u8("scalar width")?;
    if scalar_bytes as usize != T::BYTES {
        return Err(Error::SizeMismatch(format!(
            "checkpoint holds {scalar_bytes}-byte scalars, reader expects {}",
            T::BYTES
        )));
    }
    let code = r.u8("encoder kind")?;
    let kind = EncoderKind::from_code(code)
        .ok_or_else(|| Error::UnsupportedVariant(format!("encoder kind {code}")))?;

    enum Cfg {
        Sphere(HashSphereConfig),
        Grid(DirectionMap, GridEncodingConfig),
        Joint(JointConfig),
    }
    let cfg = match kind {
        EncoderKind::HashSphere => Cfg::Sphere(HashSphereConfig {
            levels: r.u32("encoder config")?,
            features: r.u32("encoder config")? as usize,
            hash: r.hash()?,
        }),
        EncoderKind::GridPolar | EncoderKind::GridCartesian => {
            let c = GridEncodingConfig {
                dims: r.u8("encoder config")? as usize,
                base_resolution: r.u32("encoder config")?,
                scale: r.f64("encoder config")?,
                levels: r.u32("encoder config")?,
                features: r.u32("encoder config")? as usize,
                table_cap: r.u32("encoder config")?,
                primes: r.u32x3("encoder config")?,
            };
            let map = if kind == EncoderKind::GridPolar { DirectionMap::Polar } else { DirectionMap::Cartesian };
            Cfg::Grid(map, c)
        }
        EncoderKind::Joint => Cfg::Joint(JointConfig {
            levels: r.u32("encoder config")?,
            base_resolution: r.u32("encoder config")?,
            scale: r.f64("encoder config")?,
            dir_level_cap: r.u32("encoder config")?,
            features: r.u32("encoder config")? as usize,
            hash: r.hash()?,
            bounds_min: r.f64x3("encoder config")?,
            bounds_max: r.f64x3("encoder config")?,
        }),
    };
    let (rows, features) = match &cfg {
        Cfg::Sphere(c) => {
            c.validate()?;
            (c.rows_per_level(), c.features)
        }
        Cfg::Grid(map, c) => {
            c.validate()?;
            if c.dims != map.dims() {
                return Err(Error::SizeMismatch(format!("{}-D grid stored for {map:?} mapping", c.dims)));
            }
            (c.rows_per_level(), c.features)
        }
        Cfg::Joint(c) => {
            c.validate()?;
            (c.rows_per_level(), c.features)
        }
    };

    let count = r.u32("table count")? as usize;
    if count != rows.len() {
        return Err(Error::SizeMismatch(format!("{count} tables stored for {} levels", rows.len())));
    }
    let mut tables = Vec::with_capacity(count);
    for (l, &expect) in rows.iter().enumerate() {
        let n = r.u64("table header")?;
        let f = r.u32("table header")? as usize;
        if n != expect as u64 || f != features {
            return Err(Error::SizeMismatch(format!(
                "level {l} table is {n}x{f}, configuration implies {expect}x{features}"
            )));
        }
        let values = r.scalars::<T>(n * f as u64, "table values")?;
        tables.push(ParamTable::from_values(expect, features, values)?);
    }

    let act = |c: u8| Activation::from_code(c).ok_or_else(|| Error::UnsupportedVariant(format!("activation {c}")));
    let out_act =
        |c: u8| OutputActivation::from_code(c).ok_or_else(|| Error::UnsupportedVariant(format!("output activation {c}")));
    let mlp_cfg = MlpConfig {
        input_width: r.u32("MLP config")? as usize,
        hidden_layers: r.u32("MLP config")? as usize,
        hidden_width: r.u32("MLP config")? as usize,
        hidden_activation: act(r.u8("MLP config")?)?,
        output_activation: out_act(r.u8("MLP config")?)?,
        output_width: r.u32("MLP config")? as usize,
    };
    mlp_cfg.validate()?;
    let n = r.u64("MLP parameter count")?;
    if n != mlp_cfg.parameter_count() as u64 {
        return Err(Error::SizeMismatch(format!(
            "{n} MLP parameters stored, configuration implies {}",
            mlp_cfg.parameter_count()
        )));
    }
    let params = r.scalars::<T>(n, "MLP parameters")?;
    let meta = ModelMeta { seed: r.u64("metadata")?, steps: r.u64("metadata")? };
    if r.pos != bytes.len() {
        return Err(Error::SizeMismatch(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let encoder = match cfg {
        Cfg::Sphere(c) => ModelEncoder::Sphere(HashSphere::with_tables(c, tables)?),
        Cfg::Grid(map, c) => ModelEncoder::Grid(DirectionalGrid::from_grid(map, HashGrid::with_tables(c, tables)?)?),
        Cfg::Joint(c) => ModelEncoder::Joint(HashGridSphere::with_tables(c, tables)?),
    };
    let model = Model::new(encoder, Mlp::from_params(mlp_cfg, params)?, meta)
        .map_err(|e| Error::SizeMismatch(e.to_string()))?;
    debug_assert_eq!(model.encoder.parameter_count(), rows.iter().sum::<usize>() * features);
    Ok(model)
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Model<T>> {
    decode_checkpoint(&fs::read(path)?)
}
