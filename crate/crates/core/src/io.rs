//! On-disk formats.
//!
//! * MPS and layer-stack files are binary: an 8-byte magic, a little-endian
//!   `u32` header length, a JSON header and then the complex entries as
//!   interleaved little-endian `f64` pairs `(re, im)`. Bit-exact round trips.
//! * Numeric series are CSV with shortest round-trip float formatting.
//! * Fits, summaries and manifests are pretty-printed JSON.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{EncoderGate, EncodingDiagnostics, MpdLayer};
use crate::mps::{CanonicalForm, Mps, Tensor3};
use crate::pite::Trajectory;
use crate::{Error, Result, BIT_CONVENTION, C64};

pub const MPS_MAGIC: &[u8; 8] = b"GSPMPS01";
pub const LAYERS_MAGIC: &[u8; 8] = b"GSPMPD01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpsHeader {
    pub n_sites: usize,
    /// Bond dimensions including the two trivial boundary bonds.
    pub bond_dims: Vec<usize>,
    pub canonical_form: CanonicalForm,
    pub bit_convention: String,
    /// Seed of the run that produced the tensors, if any.
    pub seed: Option<u64>,
    /// Site tensors are stored as `(left, physical, right)` in row-major order.
    pub layout: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayersHeader {
    pub n_sites: usize,
    pub bit_convention: String,
    /// One entry per layer: its index and the wires of each stored gate.
    pub layers: Vec<(usize, Vec<Vec<usize>>)>,
    /// Gate order inside a layer.
    pub gate_order: String,
}

fn write_binary<H: Serialize>(path: &Path, magic: &[u8; 8], header: &H, data: impl Iterator<Item = C64>) -> Result<()> {
    let head = serde_json::to_vec(header)?;
    let len = u32::try_from(head.len()).map_err(|_| Error::Format("header too large".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(magic)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&head)?;
    for z in data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_binary<H: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<(H, Vec<C64>)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let name = path.display();
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(Error::Format(format!("{name}: bad magic")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12 + len..).ok_or_else(|| Error::Format(format!("{name}: truncated header")))?;
    let header = serde_json::from_slice(&bytes[12..12 + len])?;
    if body.len() % 16 != 0 {
        return Err(Error::Format(format!("{name}: payload is not a whole number of complex entries")));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
    let data = body.chunks_exact(16).map(|c| C64::new(f(&c[..8]), f(&c[8..]))).collect();
    Ok((header, data))
}

fn check_convention(found: &str, path: &Path) -> Result<()> {
    if found != BIT_CONVENTION {
        return Err(Error::Format(format!("{}: bit convention `{found}`, expected `{BIT_CONVENTION}`", path.display())));
    }
    Ok(())
}

pub fn write_mps(path: &Path, mps: &Mps, seed: Option<u64>) -> Result<()> {
    let header = MpsHeader {
        n_sites: mps.n_sites(),
        bond_dims: mps.bond_dims(),
        canonical_form: mps.form(),
        bit_convention: BIT_CONVENTION.into(),
        seed,
        layout: "left-physical-right row-major".into(),
    };
    write_binary(path, MPS_MAGIC, &header, mps.tensors().iter().flat_map(|t| t.data().iter().copied()))
}

pub fn read_mps(path: &Path) -> Result<(Mps, MpsHeader)> {
    let (header, data): (MpsHeader, Vec<C64>) = read_binary(path, MPS_MAGIC)?;
    check_convention(&header.bit_convention, path)?;
    if header.bond_dims.len() != header.n_sites + 1 {
        return Err(Error::Format(format!("{}: {} bond dims for {} sites", path.display(), header.bond_dims.len(), header.n_sites)));
    }
    let expected: usize = header.bond_dims.windows(2).map(|w| w[0] * 2 * w[1]).sum();
    if expected != data.len() {
        return Err(Error::Format(format!("{}: {} entries, header implies {expected}", path.display(), data.len())));
    }
    let mut tensors = Vec::with_capacity(header.n_sites);
    let mut offset = 0;
    for w in header.bond_dims.windows(2) {
        let len = w[0] * 2 * w[1];
        tensors.push(Tensor3::new(w[0], w[1], data[offset..offset + len].to_vec())?);
        offset += len;
    }
    Ok((Mps::from_tensors(tensors, header.canonical_form)?, header))
}

pub fn write_layers(path: &Path, layers: &[MpdLayer], n_sites: usize) -> Result<()> {
    if let Some(l) = layers.iter().find(|l| l.n_sites != n_sites) {
        return Err(Error::Dimension(format!("layer {} acts on {} sites, not {n_sites}", l.index, l.n_sites)));
    }
    let header = LayersHeader {
        n_sites,
        bit_convention: BIT_CONVENTION.into(),
        layers: layers.iter().map(|l| (l.index, l.gates.iter().map(|g| g.wires.clone()).collect())).collect(),
        gate_order: "disentangling order; encode applies them reversed".into(),
    };
    let data = layers.iter().flat_map(|l| l.gates.iter().flat_map(|g| g.matrix.iter().copied()));
    write_binary(path, LAYERS_MAGIC, &header, data)
}

pub fn read_layers(path: &Path) -> Result<(Vec<MpdLayer>, LayersHeader)> {
    let (header, data): (LayersHeader, Vec<C64>) = read_binary(path, LAYERS_MAGIC)?;
    check_convention(&header.bit_convention, path)?;
    let mut offset = 0;
    let mut layers = Vec::with_capacity(header.layers.len());
    for (index, wires) in &header.layers {
        let mut gates = Vec::with_capacity(wires.len());
        for w in wires {
            let dim = 1usize << w.len();
            let matrix = data
                .get(offset..offset + dim * dim)
                .ok_or_else(|| Error::Format(format!("{}: gate data truncated", path.display())))?
                .to_vec();
            offset += dim * dim;
            gates.push(EncoderGate { wires: w.clone(), matrix });
        }
        layers.push(MpdLayer { index: *index, n_sites: header.n_sites, gates });
    }
    if offset != data.len() {
        return Err(Error::Format(format!("{}: {} trailing entries", path.display(), data.len() - offset)));
    }
    Ok((layers, header))
}

/// One row of the encoding diagnostics series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingRow {
    pub l: usize,
    pub chi_cut: usize,
    pub chi_ratio: f64,
    pub fidelity: f64,
    pub if_per_site: f64,
    pub discarded_weight: f64,
}

/// One row of a PITE trajectory series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub k: usize,
    pub dtau: f64,
    pub reps: usize,
    pub cap_hit: bool,
    pub p: f64,
    pub p_cum: f64,
    pub infidelity: f64,
    pub delta_e: f64,
    pub depth: usize,
    pub depth_cum: usize,
    pub rzz: usize,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes only a header line when `rows` is empty; `columns` supplies it.
pub fn write_csv_with_header<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<()> {
    if !rows.is_empty() {
        return write_csv(path, rows);
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(columns).map_err(csv_error)?;
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("{other:?}")),
        }
    } else {
        Error::Format(format!("csv: {e}"))
    }
}

pub fn encoding_rows(diag: &EncodingDiagnostics) -> Vec<EncodingRow> {
    diag.records
        .iter()
        .map(|r| EncodingRow {
            l: r.layer,
            chi_cut: r.chi_cut,
            chi_ratio: r.chi_ratio,
            fidelity: r.fidelity,
            if_per_site: r.if_per_site,
            discarded_weight: r.discarded_weight,
        })
        .collect()
}

pub fn trajectory_rows(traj: &Trajectory) -> Vec<TrajectoryRow> {
    traj.records
        .iter()
        .map(|r| TrajectoryRow {
            k: r.k,
            dtau: r.dtau,
            reps: r.reps,
            cap_hit: r.cap_hit,
            p: r.p,
            p_cum: r.p_cum,
            infidelity: r.infidelity,
            delta_e: r.delta_e,
            depth: r.depth,
            depth_cum: r.depth_cum,
            rzz: r.rzz,
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{run_disentangler, EncoderOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mps_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mps");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mps = Mps::random(6, 4, &mut rng).unwrap();
        write_mps(&path, &mps, Some(9)).unwrap();
        let (back, header) = read_mps(&path).unwrap();
        assert_eq!(back, mps);
        assert_eq!(header.seed, Some(9));
        assert_eq!(header.bit_convention, BIT_CONVENTION);
    }

    #[test]
    fn layers_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mpd");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = crate::StateVector::random(5, &mut rng).unwrap();
        let (layers, _) = run_disentangler(&psi, std::slice::from_ref(&psi), &EncoderOptions::fixed(3)).unwrap();
        write_layers(&path, &layers, 5).unwrap();
        let (back, header) = read_layers(&path).unwrap();
        assert_eq!(back, layers);
        assert_eq!(header.layers.len(), 3);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        fs::write(&path, b"NOTMAGIC\0\0\0\0").unwrap();
        assert!(matches!(read_mps(&path), Err(Error::Format(_))));
        assert!(matches!(read_mps(&dir.path().join("missing")), Err(Error::Io(_))));
    }

    #[test]
    fn csv_floats_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let rows = vec![
            EncodingRow { l: 0, chi_cut: 3, chi_ratio: 0.1 + 0.2, fidelity: 1.0 / 3.0, if_per_site: 1e-17, discarded_weight: 0.0 },
            EncodingRow { l: 1, chi_cut: 4, chi_ratio: 0.5, fidelity: 0.9, if_per_site: 2.5e-3, discarded_weight: 1e-300 },
        ];
        write_csv(&path, &rows).unwrap();
        assert_eq!(read_csv::<EncodingRow>(&path).unwrap(), rows);
        let header = fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("l,chi_cut,chi_ratio,fidelity,if_per_site,discarded_weight\n"));
    }

    #[test]
    fn empty_csv_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv_with_header::<TrajectoryRow>(&path, &["k", "dtau"], &[]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "k,dtau\n");
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
