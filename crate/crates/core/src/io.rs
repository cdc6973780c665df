//! Parameter archives, PGM images, CSV traces, mask files and the test phantom.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linops::{ConvLayer, FilterBank, KernelConstraint};
use crate::scalar::Real;
use crate::schemes::{MmrModel, SafiModel, SchemeTrace};
use crate::splines::{ConcavePotential, SigmoidSpline, SplineCoeffs};
use crate::tensor::{Image, Rng};

const MAGIC: &[u8] = b"MMRSAFI1\n";
const END: &str = "END";

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Ordered collection of named `f64` arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamArchive {
    entries: Vec<ArchiveEntry>,
}

impl ParamArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        if name.is_empty()
            || !name.is_ascii()
            || name.chars().any(|c| c.is_ascii_whitespace())
            || name == END
        {
            return Err(Error::Format(format!("invalid array name {name:?}")));
        }
        if self.get(name).is_some() {
            return Err(Error::Format(format!("duplicate array name {name}")));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Format(format!(
                "array {name}: shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        self.entries.push(ArchiveEntry {
            name: name.to_string(),
            shape,
            data,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ArchiveEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn require(&self, name: &str) -> Result<&ArchiveEntry> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("missing array {name}")))
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        let e = self.require(name)?;
        match e.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Format(format!("array {name} is not a scalar"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        for e in &self.entries {
            let _ = write!(header, "{} {}", e.name, e.shape.len());
            for d in &e.shape {
                let _ = write!(header, " {d}");
            }
            header.push('\n');
        }
        header.push_str(END);
        header.push('\n');
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(header.as_bytes());
        for e in &self.entries {
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC)
            .ok_or_else(|| Error::Format("bad archive magic".into()))?;
        let mut pos = 0;
        let mut specs = Vec::new();
        loop {
            let nl = rest[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Format("unterminated archive header".into()))?;
            let line = std::str::from_utf8(&rest[pos..pos + nl])
                .map_err(|_| Error::Format("archive header is not UTF-8".into()))?;
            pos += nl + 1;
            if line == END {
                break;
            }
            let mut fields = line.split(' ');
            let name = fields.next().unwrap_or_default().to_string();
            let parse = |f: Option<&str>| -> Result<usize> {
                f.and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("malformed header line {line:?}")))
            };
            let ndim = parse(fields.next())?;
            let shape = (0..ndim)
                .map(|_| parse(fields.next()))
                .collect::<Result<Vec<_>>>()?;
            if fields.next().is_some() {
                return Err(Error::Format(format!("malformed header line {line:?}")));
            }
            specs.push((name, shape));
        }
        let mut archive = ParamArchive::new();
        let mut payload = &rest[pos..];
        for (name, shape) in specs {
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let bytes_needed = n.and_then(|n| n.checked_mul(8));
            let need =
                bytes_needed.ok_or_else(|| Error::Format(format!("array {name} is too large")))?;
            if payload.len() < need {
                return Err(Error::Format(format!("truncated payload for array {name}")));
            }
            let data = payload[..need]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            payload = &payload[need..];
            archive.push(&name, shape, data)?;
        }
        if !payload.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing payload bytes",
                payload.len()
            )));
        }
        Ok(archive)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

fn push_bank<T: Real>(a: &mut ParamArchive, prefix: &str, bank: &FilterBank<T>) -> Result<()> {
    let groups: Vec<f64> = bank.layers().iter().map(|l| l.groups() as f64).collect();
    a.push(&format!("{prefix}.groups"), vec![groups.len()], groups)?;
    for (s, l) in bank.layers().iter().enumerate() {
        let shape = vec![
            l.out_channels(),
            l.in_channels() / l.groups(),
            l.ksize(),
            l.ksize(),
        ];
        let data = l.taps().iter().map(|v| v.as_f64()).collect();
        a.push(&format!("{prefix}.{s}"), shape, data)?;
    }
    Ok(())
}

fn read_bank<T: Real>(
    a: &ParamArchive,
    prefix: &str,
    constraint: KernelConstraint,
) -> Result<FilterBank<T>> {
    let groups = a.require(&format!("{prefix}.groups"))?;
    let mut layers = Vec::with_capacity(groups.data.len());
    let mut in_channels = 0;
    for (s, &g) in groups.data.iter().enumerate() {
        let e = a.require(&format!("{prefix}.{s}"))?;
        let (out, ipg, k) = match e.shape.as_slice() {
            &[o, i, k1, k2] if k1 == k2 => (o, i, k1),
            _ => {
                return Err(Error::Format(format!(
                    "{prefix}.{s} must have shape [out, in/groups, k, k]"
                )))
            }
        };
        if g < 1.0 || g.fract() != 0.0 {
            return Err(Error::Format(format!("{prefix}: invalid group count {g}")));
        }
        let g = g as usize;
        if s == 0 {
            in_channels = ipg * g;
        }
        if ipg * g != in_channels {
            return Err(Error::Format(format!(
                "{prefix}.{s}: {ipg}x{g} inputs after a stage with {in_channels} outputs"
            )));
        }
        let taps = e.data.iter().map(|&v| T::lit(v)).collect();
        layers.push(ConvLayer::new(in_channels, out, g, k, taps, constraint)?);
        in_channels = out;
    }
    FilterBank::new(layers, constraint)
}

fn push_splines<T: Real>(
    a: &mut ParamArchive,
    name: &str,
    splines: &[&SplineCoeffs<T>],
) -> Result<()> {
    let first = splines
        .first()
        .ok_or_else(|| Error::Format(format!("{name}: no splines")))?;
    if splines
        .iter()
        .any(|s| s.m() != first.m() || s.delta() != first.delta())
    {
        return Err(Error::Format(format!(
            "{name}: splines must share one grid"
        )));
    }
    let data = splines
        .iter()
        .flat_map(|s| s.coefficients().iter().map(|v| v.as_f64()))
        .collect();
    a.push(name, vec![splines.len(), 2 * first.m() + 1], data)?;
    a.push(
        &format!("{name}.delta"),
        vec![1],
        vec![first.delta().as_f64()],
    )
}

fn read_splines<T: Real>(a: &ParamArchive, name: &str) -> Result<Vec<SplineCoeffs<T>>> {
    let e = a.require(name)?;
    let delta = T::lit(a.scalar(&format!("{name}.delta"))?);
    let (c, len) = match e.shape.as_slice() {
        &[c, len] if len % 2 == 1 && len >= 3 => (c, len),
        _ => {
            return Err(Error::Format(format!(
                "{name} must have shape [channels, 2M+1]"
            )))
        }
    };
    (0..c)
        .map(|i| {
            let d = e.data[i * len..(i + 1) * len]
                .iter()
                .map(|&v| T::lit(v))
                .collect();
            SplineCoeffs::new(len / 2, delta, d)
        })
        .collect()
}

pub fn mmr_to_archive<T: Real>(m: &MmrModel<T>) -> Result<ParamArchive> {
    let mut a = ParamArchive::new();
    a.push("lambda", vec![1], vec![m.lambda.as_f64()])?;
    push_bank(&mut a, "W", &m.w)?;
    push_bank(&mut a, "B", &m.b)?;
    let sig = m.potentials[0].sigma();
    let (nc, len) = (m.potentials.len(), sig.m() + 1);
    let mut data = Vec::with_capacity(nc * len);
    for p in &m.potentials {
        if p.sigma().m() != sig.m() || p.sigma().delta() != sig.delta() {
            return Err(Error::Format("potentials must share one grid".into()));
        }
        data.extend(p.sigma().coefficients().iter().map(|v| v.as_f64()));
    }
    a.push("sigma", vec![nc, len], data)?;
    a.push("sigma.delta", vec![1], vec![sig.delta().as_f64()])?;
    a.push(
        "r",
        vec![nc],
        m.potentials.iter().map(|p| p.r().as_f64()).collect(),
    )?;
    Ok(a)
}

/// Kernels and σ coefficients are re-projected onto their constraint sets on load.
pub fn mmr_from_archive<T: Real>(a: &ParamArchive) -> Result<MmrModel<T>> {
    let w = read_bank(a, "W", KernelConstraint::ZeroMean)?;
    let b = read_bank(a, "B", KernelConstraint::PositiveNormalized)?;
    let sigma = a.require("sigma")?;
    let r = a.require("r")?;
    let delta = T::lit(a.scalar("sigma.delta")?);
    let (nc, len) = match sigma.shape.as_slice() {
        &[c, l] if l >= 2 && r.data.len() == c => (c, l),
        _ => {
            return Err(Error::Format(
                "sigma must have shape [channels, M+1] with one r per channel".into(),
            ))
        }
    };
    let potentials = (0..nc)
        .map(|c| {
            let raw: Vec<T> = sigma.data[c * len..(c + 1) * len]
                .iter()
                .map(|&v| T::lit(v))
                .collect();
            ConcavePotential::from_raw(len - 1, delta, &raw, T::lit(r.data[c]))
        })
        .collect::<Result<Vec<_>>>()?;
    MmrModel::new(w, b, potentials, T::lit(a.scalar("lambda")?))
}

pub fn safi_to_archive<T: Real>(m: &SafiModel<T>) -> Result<ParamArchive> {
    let mut a = ParamArchive::new();
    a.push("lambda", vec![1], vec![m.lambda.as_f64()])?;
    push_bank(&mut a, "W", &m.w)?;
    push_bank(&mut a, "Wt", &m.wt)?;
    push_bank(&mut a, "Bt", &m.bt)?;
    push_bank(&mut a, "Bh", &m.bh)?;
    push_splines(&mut a, "phi1", &m.phi1.iter().collect::<Vec<_>>())?;
    push_splines(&mut a, "phi2", &m.phi2.iter().collect::<Vec<_>>())?;
    push_splines(
        &mut a,
        "phi3",
        &m.phi3.iter().map(|s| &s.base).collect::<Vec<_>>(),
    )?;
    Ok(a)
}

pub fn safi_from_archive<T: Real>(a: &ParamArchive) -> Result<SafiModel<T>> {
    let m = SafiModel {
        w: read_bank(a, "W", KernelConstraint::ZeroMean)?,
        wt: read_bank(a, "Wt", KernelConstraint::ZeroMean)?,
        bt: read_bank(a, "Bt", KernelConstraint::Unconstrained)?,
        bh: read_bank(a, "Bh", KernelConstraint::Unconstrained)?,
        phi1: read_splines(a, "phi1")?,
        phi2: read_splines(a, "phi2")?,
        phi3: read_splines(a, "phi3")?
            .into_iter()
            .map(SigmoidSpline::new)
            .collect(),
        lambda: T::lit(a.scalar("lambda")?),
    };
    m.validate()?;
    Ok(m)
}

/// Which model an archive describes.
#[derive(Clone, Debug)]
pub enum LoadedModel<T: Real> {
    Mmr(MmrModel<T>),
    Safi(SafiModel<T>),
}

pub fn model_from_archive<T: Real>(a: &ParamArchive) -> Result<LoadedModel<T>> {
    match (a.get("sigma").is_some(), a.get("phi1").is_some()) {
        (true, false) => Ok(LoadedModel::Mmr(mmr_from_archive(a)?)),
        (false, true) => Ok(LoadedModel::Safi(safi_from_archive(a)?)),
        _ => Err(Error::Format(
            "archive holds neither an MMR nor a SAFI model".into(),
        )),
    }
}

fn skip_pgm_space(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() {
        match bytes[pos] {
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => pos += 1,
            _ => break,
        }
    }
    pos
}

fn pgm_field(bytes: &[u8], pos: usize) -> Result<(usize, usize)> {
    let start = skip_pgm_space(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    let v = std::str::from_utf8(&bytes[start..end])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("malformed PGM header".into()))?;
    Ok((v, end))
}

pub fn pgm_decode<T: Real>(bytes: &[u8]) -> Result<Image<T>> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    let (width, pos) = pgm_field(bytes, 2)?;
    let (height, pos) = pgm_field(bytes, pos)?;
    let (maxval, pos) = pgm_field(bytes, pos)?;
    if width == 0 || height == 0 {
        return Err(Error::Format("PGM has an empty dimension".into()));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    if bytes.get(pos).is_none_or(|b| !b.is_ascii_whitespace()) {
        return Err(Error::Format("malformed PGM header".into()));
    }
    let data = &bytes[pos + 1..];
    let bpp = if maxval == 255 { 1 } else { 2 };
    let n = width * height;
    if data.len() != n * bpp {
        return Err(Error::Format(format!(
            "PGM payload has {} bytes, expected {}",
            data.len(),
            n * bpp
        )));
    }
    let scale = 1.0 / maxval as f64;
    let values = if bpp == 1 {
        data.iter().map(|&b| T::lit(b as f64 * scale)).collect()
    } else {
        data.chunks_exact(2)
            .map(|c| T::lit(u16::from_be_bytes([c[0], c[1]]) as f64 * scale))
            .collect()
    };
    Image::from_vec(height, width, values)
}

pub fn pgm_encode<T: Real>(img: &Image<T>, maxval: u16) -> Result<Vec<u8>> {
    if maxval != 255 && maxval != 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    let mv = maxval as f64;
    for &v in img.as_slice() {
        let q = (v.as_f64() * mv + 0.5).floor().clamp(0.0, mv) as u16;
        if maxval == 255 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn pgm_read<T: Real>(path: &Path) -> Result<Image<T>> {
    pgm_decode(&fs::read(path)?)
}

pub fn pgm_write<T: Real>(path: &Path, img: &Image<T>, maxval: u16) -> Result<()> {
    fs::write(path, pgm_encode(img, maxval)?)?;
    Ok(())
}

/// CSV with columns `k,e_k,f_k,psnr`; `f_k` and `psnr` are blank when not tracked.
pub fn trace_csv<T: Real>(trace: &SchemeTrace<T>) -> String {
    let mut out = String::from("k,e_k,f_k,psnr\n");
    let opt = |v: Option<T>| v.map(|v| v.as_f64().to_string()).unwrap_or_default();
    for s in &trace.steps {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.k,
            s.residual.as_f64(),
            opt(s.objective),
            opt(s.psnr)
        );
    }
    out
}

pub fn mask_to_string(mask: &[bool]) -> String {
    let mut s: String = mask.iter().map(|&b| if b { '1' } else { '0' }).collect();
    s.push('\n');
    s
}

pub fn mask_from_str(text: &str) -> Result<Vec<bool>> {
    let line = text.trim_end_matches(['\n', '\r']);
    if line.is_empty() || line.contains('\n') {
        return Err(Error::Format("mask file must hold exactly one line".into()));
    }
    line.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Error::Format(format!("unexpected mask character {c:?}"))),
        })
        .collect()
}

/// Side length of the shipped phantom.
pub const PHANTOM_SIZE: usize = 64;
pub const PHANTOM_SEED: u64 = 42;

/// Deterministic piecewise-constant test image: background 0.1, three
/// rectangles and four disks with geometry and intensities drawn from
/// `Rng::new(42)`. Later shapes overwrite earlier ones.
pub fn phantom<T: Real>() -> Image<T> {
    let n = PHANTOM_SIZE;
    let mut rng = Rng::new(PHANTOM_SEED);
    let mut img = Image::filled(n, n, T::lit(0.1));
    for _ in 0..3 {
        let h = 10 + rng.below(n / 3);
        let w = 10 + rng.below(n / 3);
        let r0 = 4 + rng.below(n - h - 8);
        let c0 = 4 + rng.below(n - w - 8);
        let v = T::lit(rng.uniform_in(0.25, 0.6));
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                img.set(r, c, v);
            }
        }
    }
    for _ in 0..4 {
        let radius = 4 + rng.below(7);
        let cr = (radius + 2 + rng.below(n - 2 * radius - 4)) as f64;
        let cc = (radius + 2 + rng.below(n - 2 * radius - 4)) as f64;
        let v = T::lit(rng.uniform_in(0.6, 0.95));
        let r2 = (radius * radius) as f64;
        for r in 0..n {
            for c in 0..n {
                let (dr, dc) = (r as f64 - cr, c as f64 - cc);
                if dr * dr + dc * dc <= r2 {
                    img.set(r, c, v);
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{
        default_safi_model, default_tv_model, random_mmr_model, random_safi_model,
    };

    #[test]
    fn empty_archive_bytes() {
        assert_eq!(ParamArchive::new().to_bytes(), b"MMRSAFI1\nEND\n");
        assert_eq!(
            ParamArchive::from_bytes(b"MMRSAFI1\nEND\n").unwrap(),
            ParamArchive::new()
        );
    }

    #[test]
    fn archive_round_trip_and_errors() {
        let mut a = ParamArchive::new();
        a.push("x", vec![2, 3], (0..6).map(|v| v as f64 * 0.1).collect())
            .unwrap();
        a.push("s", vec![], vec![f64::MIN_POSITIVE]).unwrap();
        assert!(a.push("x", vec![1], vec![0.0]).is_err());
        assert!(a.push("y", vec![2], vec![0.0]).is_err());
        let bytes = a.to_bytes();
        assert_eq!(ParamArchive::from_bytes(&bytes).unwrap(), a);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ParamArchive::from_bytes(&bad).is_err());
        assert!(ParamArchive::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(ParamArchive::from_bytes(
            b"MMRSAFI1\nx 1 1\nx 1 1\nEND\n\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0"
        )
        .is_err());
    }

    #[test]
    fn model_archives_round_trip() {
        let mut rng = Rng::new(8);
        for m in [
            default_tv_model::<f64>(),
            random_mmr_model(3, 2, &mut rng).unwrap(),
        ] {
            let back: MmrModel<f64> = mmr_from_archive(&mmr_to_archive(&m).unwrap()).unwrap();
            assert_eq!(back, m);
        }
        for m in [
            default_safi_model::<f64>(),
            random_safi_model(2, &mut rng).unwrap(),
        ] {
            let a = safi_to_archive(&m).unwrap();
            let back = ParamArchive::from_bytes(&a.to_bytes()).unwrap();
            match model_from_archive::<f64>(&back).unwrap() {
                LoadedModel::Safi(s) => assert_eq!(s, m),
                LoadedModel::Mmr(_) => panic!("wrong kind"),
            }
        }
    }

    #[test]
    fn pgm_examples() {
        let zero = pgm_encode(&Image::<f64>::zeros(4, 4), 255).unwrap();
        assert_eq!(pgm_decode::<f64>(&zero).unwrap(), Image::zeros(4, 4));
        let img: Image<f64> = pgm_decode(b"P5\n# c\n1 1\n255\n\x80").unwrap();
        assert!((img.get(0, 0) - 0.50196).abs() < 1e-5);
        assert!(pgm_decode::<f64>(b"P5\n1 1\n100\n\x01").is_err());
        assert!(pgm_decode::<f64>(b"P2\n1 1\n255\n1").is_err());
        let mut rng = Rng::new(3);
        let bytes: Vec<u8> = b"P5\n3 2\n65535\n"
            .iter()
            .copied()
            .chain((0..12).map(|_| rng.below(256) as u8))
            .collect();
        let decoded: Image<f64> = pgm_decode(&bytes).unwrap();
        assert_eq!(pgm_encode(&decoded, 65535).unwrap(), bytes);
    }

    #[test]
    fn mask_file_round_trip() {
        let m = vec![true, false, false, true];
        assert_eq!(mask_to_string(&m), "1001\n");
        assert_eq!(mask_from_str("1001\n").unwrap(), m);
        assert!(mask_from_str("10a1").is_err());
        assert!(mask_from_str("").is_err());
    }

    #[test]
    fn phantom_is_deterministic_and_in_range() {
        let a: Image<f64> = phantom();
        assert_eq!(a, phantom());
        assert_eq!(a.shape(), (64, 64));
        assert!(a.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let mut levels: Vec<f64> = a.as_slice().to_vec();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert!(levels.len() >= 5);
    }
}
