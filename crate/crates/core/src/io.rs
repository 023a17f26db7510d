//! Persistence: JSON documents for networks, circuits and reports, DOT export.

/// Complex matrices as nested `[re, im]` rows.
pub mod cmat_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::{CMat, C64};

    pub fn to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
        (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMat, String> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != nc) {
            return Err("ragged matrix rows".into());
        }
        Ok(CMat::from_fn(nr, nc, |r, c| C64::new(rows[r][c][0], rows[r][c][1])))
    }

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::circuit::QuantumCircuit;
use crate::error::Error;
use crate::graph::{validate, Diagnostics, Edge, External, ExternalKind, Network, Vertex};
use crate::linalg::{CMat, C64};
use crate::tensor::{LegSpec, Tensor};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("unsupported format_version `{0}` (expected \"1\")")]
    Version(String),
    #[error(transparent)]
    Domain(#[from] Error),
}

pub type IoResult<T> = std::result::Result<T, IoError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexDoc {
    pub id: String,
    #[serde(default)]
    pub site: i64,
    #[serde(default)]
    pub layer: i64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    pub legs: Vec<LegSpec>,
    /// Entries in row-major order over the declared legs.
    pub data: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub format_version: String,
    pub d: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub general_tensors: bool,
    pub vertices: Vec<VertexDoc>,
    pub edges: Vec<Edge>,
    pub sources: Vec<External>,
    pub sinks: Vec<External>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<i64>,
}

impl NetworkDocument {
    pub fn from_network(net: &Network) -> Self {
        NetworkDocument {
            format_version: FORMAT_VERSION.into(),
            d: net.d,
            general_tensors: false,
            vertices: net
                .vertices
                .iter()
                .map(|v| VertexDoc {
                    id: v.id.clone(),
                    site: v.site,
                    layer: v.layer,
                    label: if v.tensor.label == v.id { String::new() } else { v.tensor.label.clone() },
                    legs: v.tensor.legs().to_vec(),
                    data: v.tensor.data().iter().map(|z| [z.re, z.im]).collect(),
                })
                .collect(),
            edges: net.edges.clone(),
            sources: net.sources.clone(),
            sinks: net.sinks.clone(),
            period: net.period,
        }
    }

    /// Builds the network. Tensor-level problems (data length, repeated leg
    /// ids) are errors here; graph-level findings go to [`validate`].
    pub fn to_network(&self) -> IoResult<Network> {
        check_version(&self.format_version)?;
        let mut net = Network::new(self.d);
        for (k, v) in self.vertices.iter().enumerate() {
            let data = v.data.iter().map(|p| C64::new(p[0], p[1])).collect();
            let label = if v.label.is_empty() { v.id.clone() } else { v.label.clone() };
            let tensor = Tensor::new(v.legs.clone(), data, label).map_err(|e| IoError::Schema {
                pointer: format!("/vertices/{k}"),
                message: e.to_string(),
            })?;
            net.vertices.push(Vertex { id: v.id.clone(), tensor, site: v.site, layer: v.layer });
        }
        net.edges = self.edges.clone();
        net.sources = self.sources.clone();
        net.sinks = self.sinks.clone();
        net.period = self.period;
        Ok(net)
    }
}

fn check_version(v: &str) -> IoResult<()> {
    if v != FORMAT_VERSION {
        return Err(IoError::Version(v.into()));
    }
    Ok(())
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => write!(out, "/{index}").unwrap(),
            Segment::Map { key } => write!(out, "/{}", key.replace('~', "~0").replace('/', "~1")).unwrap(),
            Segment::Enum { variant } => write!(out, "/{variant}").unwrap(),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parses JSON text into `T`, reporting schema violations with the JSON
/// pointer of the offending field. The version field is checked first so an
/// unknown version is reported as such rather than as a schema mismatch.
pub fn parse_document<T: DeserializeOwned>(text: &str) -> IoResult<T> {
    if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(text) {
        if let Some(v) = map.get("format_version") {
            match v.as_str() {
                Some(s) => check_version(s)?,
                None => {
                    return Err(IoError::Schema {
                        pointer: "/format_version".into(),
                        message: "expected a string".into(),
                    })
                }
            }
        }
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| IoError::Schema {
        pointer: pointer_of(e.path()),
        message: e.inner().to_string(),
    })
}

pub fn to_json<T: Serialize>(x: &T) -> String {
    let mut s = serde_json::to_string_pretty(x).expect("serializable");
    s.push('\n');
    s
}

pub fn read_text(path: &Path) -> IoResult<String> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

pub fn write_text(path: &Path, text: &str) -> IoResult<()> {
    std::fs::write(path, text).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

/// A loaded network with its validation report. Non-unitary tensors are
/// warnings unless the document declares `general_tensors`.
#[derive(Clone, Debug)]
pub struct LoadedNetwork {
    pub network: Network,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

pub fn load_network_str(text: &str) -> IoResult<LoadedNetwork> {
    let doc: NetworkDocument = parse_document(text)?;
    let network = doc.to_network()?;
    let diagnostics = validate(&network);
    if !diagnostics.structural.is_empty() {
        return Err(IoError::Domain(Error::Structure(diagnostics.structural.join("; "))));
    }
    let warnings = if doc.general_tensors {
        Vec::new()
    } else {
        diagnostics.non_unitary.iter().map(|v| format!("vertex {v} is not unitary")).collect()
    };
    Ok(LoadedNetwork { network, diagnostics, warnings })
}

pub fn load_network(path: &Path) -> IoResult<LoadedNetwork> {
    load_network_str(&read_text(path)?)
}

pub fn network_to_json(net: &Network) -> String {
    to_json(&NetworkDocument::from_network(net))
}

pub fn save_network(net: &Network, path: &Path) -> IoResult<()> {
    write_text(path, &network_to_json(net))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitDocument {
    pub format_version: String,
    #[serde(flatten)]
    pub circuit: QuantumCircuit,
}

pub fn circuit_to_json(c: &QuantumCircuit) -> String {
    to_json(&CircuitDocument { format_version: FORMAT_VERSION.into(), circuit: c.clone() })
}

pub fn load_circuit_str(text: &str) -> IoResult<QuantumCircuit> {
    let doc: CircuitDocument = parse_document(text)?;
    doc.circuit.check()?;
    Ok(doc.circuit)
}

/// A bare complex matrix, e.g. a mode unitary for `csd-decompose`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDocument {
    pub format_version: String,
    #[serde(with = "cmat_serde")]
    pub matrix: CMat,
}

pub fn load_matrix_str(text: &str) -> IoResult<CMat> {
    let doc: MatrixDocument = parse_document(text)?;
    Ok(doc.matrix)
}

pub fn matrix_to_json(m: &CMat) -> String {
    to_json(&MatrixDocument { format_version: FORMAT_VERSION.into(), matrix: m.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Validation,
    Evaluation,
    Flow,
    Cost,
    Wrap,
    Locality,
    Tails,
    Conversion,
    Csd,
    Mps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format_version: String,
    pub kind: ReportKind,
    pub payload: serde_json::Value,
    pub provenance: Provenance,
}

impl ReportDocument {
    pub fn new<T: Serialize>(kind: ReportKind, payload: &T, command: Vec<String>, seed: Option<u64>) -> Self {
        ReportDocument {
            format_version: FORMAT_VERSION.into(),
            kind,
            payload: serde_json::to_value(payload).expect("serializable payload"),
            provenance: Provenance { command, seed, version: env!("CARGO_PKG_VERSION").into() },
        }
    }
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz text: one node per vertex, one per source and sink, internal
/// edges labeled with dim and length, then the external edges.
pub fn export_dot(net: &Network) -> String {
    let mut out = String::from("digraph unet {\n  rankdir=BT;\n");
    let mut ranks: BTreeMap<i64, Vec<&str>> = BTreeMap::new();
    for v in &net.vertices {
        ranks.entry(v.layer).or_default().push(&v.id);
        writeln!(out, "  {} [shape=box, label=\"{}\\nsite {}\"];", dot_id(&v.id), v.id, v.site).unwrap();
    }
    let ext_label = |e: &External| match e.boundary {
        ExternalKind::Physical => format!("site {}", e.site),
        ExternalKind::Horizontal { side, row } => format!("{side:?} row {row}").to_lowercase(),
        ExternalKind::Bond => "bond".into(),
    };
    for (k, s) in net.sources.iter().enumerate() {
        writeln!(out, "  \"in{k}\" [shape=circle, label=\"in{k}\\n{}\"];", ext_label(s)).unwrap();
    }
    for (k, s) in net.sinks.iter().enumerate() {
        writeln!(out, "  \"out{k}\" [shape=doublecircle, label=\"out{k}\\n{}\"];", ext_label(s)).unwrap();
    }
    for e in &net.edges {
        let dim = net.leg_dim(&e.from, &e.from_leg).unwrap_or(0);
        writeln!(
            out,
            "  {} -> {} [label=\"dim={dim} len={}\", taillabel={}, headlabel={}];",
            dot_id(&e.from),
            dot_id(&e.to),
            e.length,
            dot_id(&e.from_leg),
            dot_id(&e.to_leg)
        )
        .unwrap();
    }
    let dims_in = net.source_dims();
    for (k, s) in net.sources.iter().enumerate() {
        writeln!(out, "  \"in{k}\" -> {} [label=\"dim={}\", style=dashed];", dot_id(&s.vertex), dims_in[k]).unwrap();
    }
    let dims_out = net.sink_dims();
    for (k, s) in net.sinks.iter().enumerate() {
        writeln!(out, "  {} -> \"out{k}\" [label=\"dim={}\", style=dashed];", dot_id(&s.vertex), dims_out[k]).unwrap();
    }
    for ids in ranks.values() {
        let list: Vec<String> = ids.iter().map(|s| dot_id(s)).collect();
        writeln!(out, "  {{ rank=same; {} }}", list.join("; ")).unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{self, ShiftVariant, StackedVariant};

    fn fixtures() -> Vec<Network> {
        vec![
            gallery::build_shift(4, 2, ShiftVariant::ObcBilayer).unwrap(),
            gallery::build_shift(4, 2, ShiftVariant::PbcWrapped).unwrap(),
            gallery::build_stacked_cnot(5, StackedVariant::Forward).unwrap(),
            gallery::build_kw(4).unwrap(),
            gallery::build_haar_bilayer(3, 2, 2, 2, 1).unwrap(),
            gallery::build_loop_example(2).unwrap(),
            gallery::build_subnetwork_example(3).unwrap(),
            gallery::build_self_trace(2, 3).unwrap(),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for net in fixtures() {
            let text = network_to_json(&net);
            let loaded = load_network_str(&text).unwrap();
            assert_eq!(loaded.network, net);
            assert_eq!(network_to_json(&loaded.network), text);
        }
    }

    #[test]
    fn bad_direction_names_the_field() {
        let net = gallery::build_kw(3).unwrap();
        let text = network_to_json(&net).replacen("\"incoming\"", "\"inward\"", 1);
        match load_network_str(&text) {
            Err(IoError::Schema { pointer, .. }) => {
                assert!(pointer.starts_with("/vertices/") && pointer.ends_with("/direction"), "{pointer}")
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version_is_rejected() {
        let net = gallery::build_kw(3).unwrap();
        let text = network_to_json(&net).replacen("\"format_version\": \"1\"", "\"format_version\": \"7\"", 1);
        assert!(matches!(load_network_str(&text), Err(IoError::Version(v)) if v == "7"));
    }

    #[test]
    fn loop_fixture_loads_with_dag_false() {
        let net = gallery::build_loop_example(4).unwrap();
        let loaded = load_network_str(&network_to_json(&net)).unwrap();
        assert!(!loaded.diagnostics.dag);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn non_unitary_is_a_warning_unless_declared() {
        let mut net = gallery::build_kw(3).unwrap();
        let t = &net.vertices[0].tensor;
        let scaled = t.scale(C64::new(2.0, 0.0));
        net.vertices[0].tensor = scaled;
        let text = network_to_json(&net);
        assert_eq!(load_network_str(&text).unwrap().warnings.len(), 1);
        let declared = text.replacen("\"d\": 2,", "\"d\": 2,\n  \"general_tensors\": true,", 1);
        assert!(load_network_str(&declared).unwrap().warnings.is_empty());
    }

    #[test]
    fn dot_counts_and_determinism() {
        assert_eq!(export_dot(&Network::new(2)), "digraph unet {\n  rankdir=BT;\n}\n");
        let net = gallery::build_identity_bilayer(3, 2, 2).unwrap();
        let dot = export_dot(&net);
        let internal = dot.lines().filter(|l| l.contains("-> ") && l.contains("len=")).count();
        assert_eq!(internal, net.edges.len());
        let nodes = dot.lines().filter(|l| l.contains("[shape=")).count();
        assert_eq!(nodes, net.vertices.len() + net.sources.len() + net.sinks.len());
        assert_eq!(dot, export_dot(&net));
    }

    #[test]
    fn circuit_round_trip() {
        let c = crate::circuit::random_sqc(3, 4, 2, 2, 9).unwrap();
        let text = circuit_to_json(&c);
        assert_eq!(load_circuit_str(&text).unwrap(), c);
    }
}
