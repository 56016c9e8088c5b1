use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use polar_feec::conforming::ConformityKind;
use polar_feec::geometry::read_mapping;
use polar_feec::solvers::poisson::LinearSolver;
use polar_feec::study::{
    run_maxwell_bessel_study, run_poisson_study, run_verify, run_wave_demo, sci, verify_report, CheckStatus,
    ProblemKind, RunConfig,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Problem {
    Poisson,
    MaxwellBessel,
    MaxwellWave,
    Verify,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    C0,
    C1,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Solver {
    Cg,
    Cholesky,
}

/// Broken-FEEC spline solvers on polar domains.
#[derive(Debug, Parser)]
#[command(name = "polar-feec", version)]
struct Args {
    #[arg(long, value_enum, default_value = "poisson")]
    problem: Problem,
    /// Spline degree.
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Radial cell counts, comma separated [default: 8,16,32,64; 8,16,32 for Maxwell].
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    /// Angular cells per radial cell.
    #[arg(long, default_value_t = 2)]
    ntheta_factor: usize,
    /// Horizontal offset D of the pole in the shifted-disk map.
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pole_shift: f64,
    #[arg(long, value_enum, default_value = "c1")]
    kind: Kind,
    /// Stabilization weight of the Poisson system.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "cg")]
    solver: Solver,
    /// Relative residual tolerance of conjugate gradients.
    #[arg(long, default_value_t = 1e-12)]
    cg_tol: f64,
    /// Diagonal preconditioning for conjugate gradients.
    #[arg(long)]
    jacobi: bool,
    /// Time step; defaults to half the smallest mesh edge, capped by stability.
    #[arg(long)]
    dt: Option<f64>,
    /// Final time of the Bessel study.
    #[arg(long, default_value_t = 0.1)]
    final_time: f64,
    /// Snapshot times of the wave demo, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2.5,5,7.5")]
    times: Vec<f64>,
    /// Width of the initial Gaussian pulse.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Raster size of the wave snapshots.
    #[arg(long, default_value_t = 256)]
    raster: usize,
    /// Worker threads for assembly.
    #[arg(long)]
    threads: Option<usize>,
    /// Spline mapping file replacing the shifted disk.
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write zeros in the seconds column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

impl Args {
    fn config(&self) -> Result<RunConfig, String> {
        let problem = match self.problem {
            Problem::Poisson => ProblemKind::Poisson,
            Problem::MaxwellBessel => ProblemKind::MaxwellBessel,
            Problem::MaxwellWave => ProblemKind::MaxwellWave,
            Problem::Verify => ProblemKind::Verify,
        };
        let ns = self.ns.clone().unwrap_or_else(|| match problem {
            ProblemKind::Poisson | ProblemKind::Verify => vec![8, 16, 32, 64],
            ProblemKind::MaxwellBessel | ProblemKind::MaxwellWave => vec![8, 16, 32],
        });
        let mapping = match &self.mapping {
            Some(path) => {
                let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
                Some(read_mapping(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))?)
            }
            None => None,
        };
        let solver = match self.solver {
            Solver::Cg => LinearSolver::ConjugateGradient { tol: self.cg_tol, max_iter: 100_000, jacobi: self.jacobi },
            Solver::Cholesky => LinearSolver::Cholesky,
        };
        let cfg = RunConfig {
            problem,
            degree: self.degree,
            ns,
            ntheta_factor: self.ntheta_factor,
            pole_shift: self.pole_shift,
            kind: match self.kind {
                Kind::C0 => ConformityKind::V,
                Kind::C1 => ConformityKind::U,
            },
            alpha: self.alpha,
            solver,
            dt: self.dt,
            mapping,
            final_time: self.final_time,
            sigma: self.sigma,
            snapshot_times: self.times.clone(),
            raster: self.raster,
            timing: !self.no_timing,
            ..Default::default()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

/// Copies every line to stdout as well as to the results file.
struct Tee<W: Write> {
    file: W,
}

impl<W: Write> Write for Tee<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.file.write_all(buf)?;
        io::stdout().write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.file.flush()?;
        io::stdout().flush()
    }
}

fn results_file(out: &Path) -> Result<Tee<BufWriter<File>>, String> {
    let path = out.join("results.csv");
    let file = File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(Tee { file: BufWriter::new(file) })
}

fn run(args: &Args) -> Result<bool, String> {
    let cfg = args.config()?;
    if let Some(n) = args.threads {
        #[cfg(feature = "parallel")]
        polar_feec::study::configure_threads(n).map_err(|e| e.to_string())?;
        #[cfg(not(feature = "parallel"))]
        eprintln!("warning: built without thread support, ignoring --threads {n}");
    }
    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    match cfg.problem {
        ProblemKind::Poisson => {
            let mut out = results_file(&args.out)?;
            run_poisson_study(&cfg, Some(&mut out)).map_err(|e| e.to_string())?;
        }
        ProblemKind::MaxwellBessel => {
            let mut out = results_file(&args.out)?;
            run_maxwell_bessel_study(&cfg, Some(&mut out)).map_err(|e| e.to_string())?;
        }
        ProblemKind::MaxwellWave => {
            let snaps = run_wave_demo(&cfg, Some(&args.out)).map_err(|e| e.to_string())?;
            let mut out = results_file(&args.out)?;
            let mut warned = Vec::new();
            writeln!(out, "N_s,time,roughness,energy").map_err(|e| e.to_string())?;
            for s in &snaps {
                if let Some(w) = s.warning.as_ref().filter(|_| !warned.contains(&s.ns)) {
                    eprintln!("warning: {w}");
                    warned.push(s.ns);
                }
                writeln!(out, "{},{},{},{}", s.ns, sci(s.time), sci(s.roughness), sci(s.energy))
                    .map_err(|e| e.to_string())?;
            }
            out.flush().map_err(|e| e.to_string())?;
        }
        ProblemKind::Verify => {
            let res = run_verify(&cfg);
            let report = verify_report(&res);
            print!("{report}");
            let path = args.out.join("verify.txt");
            fs::write(&path, &report).map_err(|e| format!("{}: {e}", path.display()))?;
            return Ok(res.iter().all(|r| r.status != CheckStatus::Fail));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
