use std::f64::consts::FRAC_PI_2;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use isorc::harness::{self, ExperimentSpec};
use isorc::homotopy::{self, PunctureGrid};
use isorc::lattice::{build_lattice, IsoradialLattice, Topology, TrackAngles};
use isorc::rcm::{self, BoundaryConditions, Configuration, ModelParams, WeightedGraph};
use isorc::transform::{self, CouplingOptions};
use isorc::{io, loops, rng, sixvertex};

type AnyError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(
    name = "isorc",
    version,
    about = "Critical random-cluster models on isoradial lattices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random-cluster sampling and exact laws
    #[command(subcommand)]
    Rcm(RcmCommand),
    /// Track exchanges
    #[command(subcommand)]
    Transform(TransformCommand),
    /// Track-exchange coupling runs
    #[command(subcommand)]
    Coupling(CouplingCommand),
    /// Loop representation of a configuration
    #[command(subcommand)]
    Loops(LoopsCommand),
    /// Homotopy classes of polylines
    #[command(subcommand)]
    Homotopy(HomotopyCommand),
    /// Leading six-vertex transfer-matrix eigenvalues
    TmEig(TmEigArgs),
    /// Run a scripted experiment from a JSON config
    Exp(ExpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    Box,
    Cylinder,
    Torus,
}

impl From<TopologyArg> for Topology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::Box => Topology::Box,
            TopologyArg::Cylinder => Topology::CylinderHorizontal,
            TopologyArg::Torus => Topology::Torus,
        }
    }
}

#[derive(Args)]
struct LatticeArgs {
    /// Primal vertices per row
    #[arg(long, default_value_t = 4)]
    width: usize,
    /// Number of tracks
    #[arg(long, default_value_t = 4)]
    height: usize,
    #[arg(long, value_enum, default_value_t = TopologyArg::Box)]
    topology: TopologyArg,
    /// Angle of every track
    #[arg(long, default_value_t = FRAC_PI_2)]
    alpha: f64,
    /// Comma-separated track angles, bottom first (overrides --alpha)
    #[arg(long, value_delimiter = ',')]
    angles: Option<Vec<f64>>,
}

impl LatticeArgs {
    fn build(&self) -> Result<IsoradialLattice, AnyError> {
        let angles = match &self.angles {
            Some(a) => TrackAngles::new(a.clone())?,
            None => TrackAngles::constant(self.alpha, self.height)?,
        };
        let height = angles.len();
        Ok(build_lattice(
            angles,
            self.width,
            height,
            self.topology.into(),
        )?)
    }
}

#[derive(Subcommand)]
enum RcmCommand {
    /// Heat-bath samples, one CSV row each
    Sample {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        /// Wired instead of free boundary
        #[arg(long)]
        wired: bool,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Sweeps between samples
        #[arg(long, default_value_t = 10)]
        sweeps: usize,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact law by enumeration (at most 24 edges)
    Exact {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long)]
        wired: bool,
    },
}

#[derive(Subcommand)]
enum TransformCommand {
    /// Exchange tracks i-1 and i of a configuration file
    TrackExchange {
        #[arg(long)]
        input: String,
        #[arg(long)]
        track: usize,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum CouplingCommand {
    /// First coupling on a mixed cylinder
    V1 {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 8)]
        width: usize,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 0)]
        sweeps: usize,
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum LoopsCommand {
    /// Loops of a configuration file, as JSON
    Trace {
        #[arg(long)]
        input: String,
    },
}

#[derive(Subcommand)]
enum HomotopyCommand {
    /// Reduced word of a closed polyline "x,y;x,y;..."
    Class {
        #[arg(long)]
        points: String,
        #[arg(long, default_value_t = 0.5)]
        eta: f64,
    },
}

#[derive(Args)]
struct TmEigArgs {
    #[arg(long = "N")]
    n: usize,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    theta: f64,
    /// Single sector; all sectors as CSV when omitted
    #[arg(long, allow_hyphen_values = true)]
    k: Option<i32>,
}

#[derive(Args)]
struct ExpArgs {
    name: String,
    #[arg(long)]
    config: String,
    /// Output prefix for <prefix>.csv and <prefix>.json (overrides the config)
    #[arg(long)]
    out: Option<String>,
}

fn boundary(lat: &IsoradialLattice, wired: bool) -> BoundaryConditions {
    if wired {
        rcm::lattice_bc(lat, true)
    } else {
        BoundaryConditions::none()
    }
}

fn run(cli: Cli) -> Result<bool, AnyError> {
    match cli.command {
        Command::Rcm(RcmCommand::Sample {
            lattice,
            q,
            wired,
            samples,
            sweeps,
            burn_in,
            seed,
        }) => {
            let lat = lattice.build()?;
            let g = WeightedGraph::from_lattice(&lat, &ModelParams::new(q)?);
            let bc = boundary(&lat, wired);
            let mut ex = rcm::Explorer::new(&g, &bc);
            let mut r = rng::stream(seed, 0);
            let mut cfg = Configuration::empty(g.num_edges());
            for _ in
                0..burn_in.unwrap_or_else(|| rcm::default_burn_in(lattice.width.max(lat.height())))
            {
                rcm::heat_bath_sweep(&g, &mut cfg, q, &mut ex, &mut r);
            }
            println!("sample,open,clusters,config");
            for s in 0..samples {
                for _ in 0..sweeps {
                    rcm::heat_bath_sweep(&g, &mut cfg, q, &mut ex, &mut r);
                }
                let k = rcm::cluster_count(&g, &cfg, &bc);
                println!("{s},{},{k},{}", cfg.num_open(), io::bit_string(&cfg));
            }
        }
        Command::Rcm(RcmCommand::Exact { lattice, q, wired }) => {
            let lat = lattice.build()?;
            let g = WeightedGraph::from_lattice(&lat, &ModelParams::new(q)?);
            let law = rcm::exact_distribution(&g, &boundary(&lat, wired), q)?;
            println!("config,probability");
            for (bits, p) in law.iter().enumerate() {
                println!(
                    "{},{p:e}",
                    io::bit_string(&Configuration::from_bits(bits as u64, g.num_edges()))
                );
            }
        }
        Command::Transform(TransformCommand::TrackExchange {
            input,
            track,
            q,
            seed,
        }) => {
            let (lat, cfg) = io::read_configuration(&std::fs::read_to_string(input)?)?;
            let out = transform::track_exchange(
                &lat,
                &cfg,
                track,
                &ModelParams::new(q)?,
                &mut rng::stream(seed, 0),
            )?;
            eprintln!("method {:?}, exact {}", out.method, out.exact);
            print!("{}", io::write_configuration(&out.lattice, &out.cfg));
        }
        Command::Coupling(CouplingCommand::V1 {
            n,
            alpha,
            width,
            q,
            sweeps,
            record_every,
            seed,
        }) => {
            let traj = transform::coupling_v1(
                n,
                alpha,
                seed,
                width,
                CouplingOptions {
                    q,
                    sweeps,
                    record_every,
                },
            )?;
            eprintln!(
                "steps {}, exact steps {}, offset {}",
                traj.steps, traj.exact_steps, traj.offset
            );
            println!("t,angles,config");
            for s in &traj.snapshots {
                let angles: Vec<String> = s.angles.iter().map(|a| format!("{a:.6}")).collect();
                println!(
                    "{},{},{}",
                    s.t,
                    angles.join(";"),
                    io::bit_string(&Configuration {
                        open: s.open.clone()
                    })
                );
            }
        }
        Command::Loops(LoopsCommand::Trace { input }) => {
            let (lat, cfg) = io::read_configuration(&std::fs::read_to_string(input)?)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&loops::trace_loops(&lat, &cfg)?)?
            );
        }
        Command::Homotopy(HomotopyCommand::Class { points, eta }) => {
            let pts = points
                .split(';')
                .map(|p| {
                    let xy: Vec<f64> = p
                        .split(',')
                        .map(|v| v.trim().parse())
                        .collect::<Result<_, _>>()?;
                    match xy[..] {
                        [x, y] => Ok([x, y]),
                        _ => Err(format!("bad point {p:?}").into()),
                    }
                })
                .collect::<Result<Vec<[f64; 2]>, AnyError>>()?;
            let class = homotopy::homotopy_class(&pts, &PunctureGrid::new(eta)?)?;
            println!("{}", serde_json::to_string(&class)?);
        }
        Command::TmEig(TmEigArgs { n, q, theta, k }) => {
            let w = sixvertex::weights_from(q, theta)?;
            let sectors: Vec<i32> = match k {
                Some(k) => vec![k],
                None => (0..=n as i32 / 2).collect(),
            };
            println!("k,dim,lambda,residual");
            for k in sectors {
                let block = sixvertex::build_transfer_block(n, k, &w)?;
                let e = sixvertex::leading_eigenvalue(&block)?;
                println!("{k},{},{:.15e},{:.3e}", block.dim(), e.lambda, e.residual);
            }
        }
        Command::Exp(ExpArgs { name, config, out }) => {
            let spec: ExperimentSpec = serde_json::from_str(&std::fs::read_to_string(config)?)?;
            if spec.name() != name {
                return Err(format!("config describes {:?}, not {name:?}", spec.name()).into());
            }
            let outcome = harness::run(&spec)?;
            if let Some(prefix) = out.or(spec.output.clone()) {
                outcome.write(&prefix)?;
            }
            println!("{}", serde_json::to_string_pretty(&outcome.report)?);
            return Ok(outcome.report.pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
