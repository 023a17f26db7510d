use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use unet::circuit::{circuit_to_un, un_to_circuit, verify_equivalence};
use unet::eval::{self, EvalOptions, Strategy, DEFAULT_MEM_CAP};
use unet::flow::{cost_total, flow_report};
use unet::gallery::{self, ShiftVariant, StackedVariant};
use unet::gaussian::{cut_ranks, decompose_gaussian, DEFAULT_EPSILON};
use unet::graph::{validate_with_tol, Network};
use unet::io::{self, IoError, ReportDocument, ReportKind};
use unet::linalg::{self, unitarity_residual, CMat};
use unet::qca::{self, MargolusScheme};

/// Flags a usage problem that clap cannot see (bad env var, bad list).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

#[derive(Parser)]
#[command(name = "unet", version, about = "Unitary tensor networks: build, validate, evaluate, analyse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InOut {
    /// Input document.
    #[arg(long, short)]
    input: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Structural checks, per-vertex unitarity residuals and acyclicity.
    Validate {
        #[command(flatten)]
        io: InOut,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Contract the network into its global matrix.
    Eval {
        #[command(flatten)]
        io: InOut,
        #[arg(long, value_enum, default_value_t = StrategyArg::Topological)]
        strategy: StrategyArg,
        /// Fix horizontal boundary legs to |0> and return the physical block.
        #[arg(long)]
        closed: bool,
    },
    /// Edge flows, vertex conservation and the net flow across vertical cuts.
    Flow {
        #[command(flatten)]
        io: InOut,
    },
    /// Total flow cost over edges.
    Cost {
        #[command(flatten)]
        io: InOut,
    },
    /// Build a gallery network.
    Gallery {
        #[command(subcommand)]
        action: GalleryAction,
    },
    /// Close horizontal externals into periodic bonds.
    WrapPbc {
        #[command(flatten)]
        io: InOut,
        /// Also save the wrapped network.
        #[arg(long)]
        network_output: Option<PathBuf>,
    },
    /// Per-site locality radius of the evaluated operator.
    Locality {
        #[command(flatten)]
        io: InOut,
        #[arg(long, default_value_t = 3)]
        max_r: usize,
    },
    /// Tail profile of a local operator under the evolution.
    Tails {
        #[command(flatten)]
        io: InOut,
        /// Treat the input as a qubit circuit and propagate Pauli strings.
        #[arg(long)]
        circuit: bool,
        /// Site (network) or wire index (circuit).
        #[arg(long)]
        site: i64,
        #[arg(long, default_value_t = 3)]
        max_r: usize,
        /// Emit CSV instead of a JSON report.
        #[arg(long)]
        csv: bool,
    },
    /// Convert between networks and circuits.
    Convert {
        #[arg(value_enum)]
        direction: ConvertDirection,
        #[command(flatten)]
        io: InOut,
        /// Where to write the converted document (report goes to --output).
        #[arg(long)]
        result: Option<PathBuf>,
    },
    /// Compile a number-conserving Gaussian mode unitary into a mode network.
    CsdDecompose {
        /// Matrix document; omit to sample a Haar unitary of the total mode count with --seed.
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Modes per site, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        modes_per_site: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Apply the network to a computational basis product state.
    Mps {
        #[command(flatten)]
        io: InOut,
        /// One digit per site, e.g. 0100.
        #[arg(long)]
        state: String,
    },
    /// Graphviz export.
    Dot {
        #[command(flatten)]
        io: InOut,
    },
}

#[derive(Subcommand)]
enum GalleryAction {
    Build {
        #[arg(value_enum)]
        name: GalleryName,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
        theta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bond dimension for bilayer and Margolus builders.
        #[arg(long, default_value_t = 2)]
        bond: usize,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Topological,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertDirection {
    UnToCircuit,
    CircuitToUn,
}

#[derive(Clone, Copy, ValueEnum)]
enum GalleryName {
    Shift,
    StackedCnot,
    Kw,
    StackedXy,
    StackedXyTi,
    IdentityBilayer,
    HaarBilayer,
    RedundantIdentity,
    NonuniformImpurity,
    FourLayerPbc,
    SingleLayerRing,
    Subnetwork,
    DagCircuit,
    Loop,
    SelfTrace,
    RandomDag,
    Margolus,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Obc,
    Pbc,
    Swap,
    Forward,
    Reversed,
    PbcCut,
    TiOpen,
}

fn mem_cap() -> anyhow::Result<usize> {
    match std::env::var("UNET_MEM_CAP") {
        Ok(s) => s.trim().parse().map_err(|_| Usage(format!("UNET_MEM_CAP must be a positive integer, got `{s}`")).into()),
        Err(_) => Ok(DEFAULT_MEM_CAP),
    }
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(p) => io::write_text(p, text).map_err(Into::into),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report<T: Serialize>(kind: ReportKind, payload: &T, seed: Option<u64>, output: Option<&Path>) -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    emit(output, &io::to_json(&ReportDocument::new(kind, payload, args, seed)))
}

fn load(path: &Path) -> anyhow::Result<Network> {
    let loaded = io::load_network(path)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded.network)
}

#[derive(Serialize)]
struct ValidationPayload {
    diagnostics: unet::graph::Diagnostics,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct EvalPayload {
    rows: usize,
    cols: usize,
    unitarity_residual: Option<f64>,
    #[serde(with = "unet::io::cmat_serde")]
    matrix: CMat,
}

#[derive(Serialize)]
struct WrapPayload {
    residual: f64,
    condition: qca::WrapCondition,
}

#[derive(Serialize)]
struct ConversionPayload {
    report: unet::circuit::ConversionReport,
    vertices: usize,
    gates: usize,
}

#[derive(Serialize)]
struct CsdPayload {
    n_modes: usize,
    modes_per_site: Vec<usize>,
    reconstruction_residual: f64,
    bond_modes: Vec<usize>,
    rank_oracle: Vec<usize>,
    network: unet::gaussian::ModeNetwork,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Validate { io: f, tol } => {
            let text = io::read_text(&f.input)?;
            let loaded = io::load_network_str(&text)?;
            let diagnostics = validate_with_tol(&loaded.network, tol);
            report(ReportKind::Validation, &ValidationPayload { diagnostics, warnings: loaded.warnings }, None, f.output.as_deref())
        }
        Command::Eval { io: f, strategy, closed } => {
            let net = load(&f.input)?;
            let strategy = match strategy {
                StrategyArg::Topological => Strategy::Topological,
                StrategyArg::Greedy => Strategy::Greedy,
            };
            let full = eval::evaluate_matrix_with(&net, EvalOptions { strategy, mem_cap: mem_cap()? })?;
            let matrix = if closed { eval::close_boundaries(&net, &full) } else { full };
            let payload = EvalPayload {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                unitarity_residual: (matrix.is_square()).then(|| unitarity_residual(&matrix)),
                matrix,
            };
            report(ReportKind::Evaluation, &payload, None, f.output.as_deref())
        }
        Command::Flow { io: f } => {
            let net = load(&f.input)?;
            report(ReportKind::Flow, &flow_report(&net), None, f.output.as_deref())
        }
        Command::Cost { io: f } => {
            let net = load(&f.input)?;
            report(ReportKind::Cost, &cost_total(&net), None, f.output.as_deref())
        }
        Command::Gallery { action: GalleryAction::Build { name, n, d, theta, seed, bond, variant, output } } => {
            let net = build_gallery(name, n, d, theta, seed, bond, variant)?;
            emit(output.as_deref(), &io::network_to_json(&net))
        }
        Command::WrapPbc { io: f, network_output } => {
            let net = load(&f.input)?;
            let w = qca::wrap_pbc(&net)?;
            if let Some(p) = network_output {
                io::save_network(&w.net, &p)?;
            }
            report(ReportKind::Wrap, &WrapPayload { residual: w.residual, condition: w.condition }, None, f.output.as_deref())
        }
        Command::Locality { io: f, max_r } => {
            let net = load(&f.input)?;
            report(ReportKind::Locality, &qca::locality_radius(&net, max_r)?, None, f.output.as_deref())
        }
        Command::Tails { io: f, circuit, site, max_r, csv } => {
            let radii: Vec<usize> = (0..=max_r).collect();
            let profile = if circuit {
                let c = io::load_circuit_str(&io::read_text(&f.input)?)?;
                if c.d != 2 {
                    return Err(anyhow!(unet::Error::Invalid("Pauli propagation needs a qubit circuit (d = 2)".into())));
                }
                let x = usize::try_from(site).map_err(|_| Usage(format!("wire {site} is negative")))?;
                qca::alpu_tails_circuit(c.n_wires, &c.gate_list(), x, &radii)?
            } else {
                qca::alpu_tails(&load(&f.input)?, site, &radii)?
            };
            if csv {
                emit(f.output.as_deref(), &profile.to_csv())
            } else {
                report(ReportKind::Tails, &profile, None, f.output.as_deref())
            }
        }
        Command::Convert { direction, io: f, result } => match direction {
            ConvertDirection::UnToCircuit => {
                let net = load(&f.input)?;
                let (circ, mut rep) = un_to_circuit(&net)?;
                rep.equivalence_residual = verify_equivalence(&net, &circ)?;
                circ.check()?;
                if let Some(p) = result {
                    io::write_text(&p, &io::circuit_to_json(&circ))?;
                }
                let payload = ConversionPayload { report: rep, vertices: net.vertices.len(), gates: circ.gates.len() };
                report(ReportKind::Conversion, &payload, None, f.output.as_deref())
            }
            ConvertDirection::CircuitToUn => {
                let circ = io::load_circuit_str(&io::read_text(&f.input)?)?;
                let (net, mut rep) = circuit_to_un(&circ)?;
                rep.equivalence_residual = verify_equivalence(&net, &circ)?;
                if let Some(p) = result {
                    io::save_network(&net, &p)?;
                }
                let payload = ConversionPayload { report: rep, vertices: net.vertices.len(), gates: circ.gates.len() };
                report(ReportKind::Conversion, &payload, None, f.output.as_deref())
            }
        },
        Command::CsdDecompose { input, output, modes_per_site, epsilon, seed } => {
            let n: usize = modes_per_site.iter().sum();
            if n == 0 || modes_per_site.contains(&0) {
                return Err(Usage("--modes-per-site entries must be positive".into()).into());
            }
            let (u, used_seed) = match &input {
                Some(p) => (io::load_matrix_str(&io::read_text(p)?)?, None),
                None => (linalg::haar_unitary(n, &mut linalg::rng(seed)), Some(seed)),
            };
            if u.nrows() != n || u.ncols() != n {
                return Err(anyhow!(unet::Error::Dimension(format!(
                    "matrix is {}x{}, modes per site sum to {n}",
                    u.nrows(),
                    u.ncols()
                ))));
            }
            let network = decompose_gaussian(&u, &modes_per_site, epsilon)?;
            let contracted = network.contract()?;
            let reconstruction_residual = linalg::frobenius(&(&contracted.matrix - &u));
            let payload = CsdPayload {
                n_modes: n,
                bond_modes: network.bond_modes(),
                rank_oracle: cut_ranks(&u, &modes_per_site, 1e-10),
                modes_per_site,
                reconstruction_residual,
                network,
            };
            report(ReportKind::Csd, &payload, used_seed, output.as_deref())
        }
        Command::Mps { io: f, state } => {
            let net = load(&f.input)?;
            let digits = state
                .chars()
                .map(|c| c.to_digit(36).map(|x| x as usize))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Usage(format!("--state must be digits, got `{state}`")))?;
            let local = eval::basis_product_state(&digits, net.d);
            report(ReportKind::Mps, &eval::apply_to_product_state(&net, &local, mem_cap()?)?, None, f.output.as_deref())
        }
        Command::Dot { io: f } => {
            let net = load(&f.input)?;
            emit(f.output.as_deref(), &io::export_dot(&net))
        }
    }
}

fn build_gallery(
    name: GalleryName,
    n: usize,
    d: usize,
    theta: f64,
    seed: u64,
    bond: usize,
    variant: Option<VariantArg>,
) -> anyhow::Result<Network> {
    let bad_variant = || Usage("variant does not apply to this gallery entry".into());
    Ok(match name {
        GalleryName::Shift => {
            let v = match variant.unwrap_or(VariantArg::Obc) {
                VariantArg::Obc => ShiftVariant::ObcBilayer,
                VariantArg::Pbc => ShiftVariant::PbcWrapped,
                VariantArg::Swap => ShiftVariant::SwapStaircaseSqc,
                _ => return Err(bad_variant().into()),
            };
            gallery::build_shift(n, d, v)?
        }
        GalleryName::StackedCnot => {
            let v = match variant.unwrap_or(VariantArg::Forward) {
                VariantArg::Forward => StackedVariant::Forward,
                VariantArg::Reversed => StackedVariant::Reversed,
                VariantArg::PbcCut => StackedVariant::PbcCut,
                VariantArg::TiOpen => StackedVariant::TiOpen,
                _ => return Err(bad_variant().into()),
            };
            gallery::build_stacked_cnot(n, v)?
        }
        other => {
            if variant.is_some() {
                return Err(bad_variant().into());
            }
            match other {
                GalleryName::Kw => gallery::build_kw(n)?,
                GalleryName::StackedXy => gallery::build_stacked_xy(n, theta)?,
                GalleryName::StackedXyTi => gallery::build_stacked_xy_ti(n, theta)?,
                GalleryName::IdentityBilayer => gallery::build_identity_bilayer(n, d, bond)?,
                GalleryName::HaarBilayer => gallery::build_haar_bilayer(n, d, bond, bond, seed)?,
                GalleryName::RedundantIdentity => gallery::build_redundant_identity(n, d, bond)?,
                GalleryName::NonuniformImpurity => gallery::build_nonuniform_impurity()?,
                GalleryName::FourLayerPbc => gallery::build_four_layer_pbc(n, d, bond, seed)?,
                GalleryName::SingleLayerRing => gallery::build_single_layer_ring(n, d, seed)?,
                GalleryName::Subnetwork => gallery::build_subnetwork_example(seed)?,
                GalleryName::DagCircuit => gallery::build_dag_circuit_example(seed)?,
                GalleryName::Loop => gallery::build_loop_example(seed)?,
                GalleryName::SelfTrace => gallery::build_self_trace(d, bond)?,
                GalleryName::RandomDag => gallery::build_random_dag(n, bond, seed)?,
                GalleryName::Margolus => qca::margolus_to_bilayer(&MargolusScheme::haar(n, d, bond, seed)?)?,
                GalleryName::Shift | GalleryName::StackedCnot => unreachable!(),
            }
        }
    })
}

/// 2 for usage, schema, version and file errors; 1 for everything the
/// domain layer rejects.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<IoError>() {
        Some(IoError::Schema { .. } | IoError::Version(_) | IoError::Io { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
