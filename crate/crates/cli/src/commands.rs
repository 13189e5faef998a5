//! The subcommands. Each resolves its parameters, echoes them in the header
//! and delegates to the library.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::Result;
use semiflex::convergence::{manufactured, rate_report, RhoRule};
use semiflex::dirichlet::green_function;
use semiflex::field::{self, exact_pairing_variance, pair, ModelParams, Regime, TestFunction};
use semiflex::grid::{Classification, Domain, GridGeometry};
use semiflex::operators::{MixedOperatorSpec, Normalization, OperatorKind};
use semiflex::rw1d::{simulate_w, var_w, RwParams};
use semiflex::spectral::{self, continuum_operator, negative_norm, weyl_check, SpectralTag};

use crate::report::{num, svg_polylines, Header, Series};
use crate::{
    ClassArg, ConvergeArgs, DomainArg, Format, GreenArgs, IoFailure, PhaseScanArgs, Preset, SampleArgs,
    SpectrumArgs, TrajectoriesArgs, Usage,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn io_err(e: io::Error, what: &Path) -> anyhow::Error {
    anyhow::Error::new(IoFailure(e)).context(format!("writing {}", what.display()))
}

/// Writes `header` then `body` to `path`, or to stdout.
fn emit(
    path: Option<&Path>,
    header: &Header,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    let write = |w: &mut dyn Write| -> io::Result<()> {
        w.write_all(header.render().as_bytes())?;
        body(w)?;
        w.flush()
    };
    match path {
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| io_err(e, p))?;
            write(&mut BufWriter::new(f)).map_err(|e| io_err(e, p))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).map_err(|e| io_err(e, Path::new("<stdout>")))
        }
    }
}

fn domain(d: usize, kind: DomainArg) -> Result<Domain> {
    Ok(match kind {
        DomainArg::Box => Domain::unit_box(d)?,
        DomainArg::Disc => Domain::unit_disc(d)?,
    })
}

fn geometry(d: usize, n: usize, kind: DomainArg, class: ClassArg) -> Result<Arc<GridGeometry>> {
    if n == 0 {
        return Err(usage("N must be positive"));
    }
    let c = match class {
        ClassArg::General => Classification::General,
        ClassArg::Chain => Classification::Chain,
    };
    Ok(Arc::new(GridGeometry::new(domain(d, kind)?, n, c)?))
}

fn class_label(c: ClassArg) -> &'static str {
    match c {
        ClassArg::General => "general",
        ClassArg::Chain => "chain",
    }
}

fn domain_label(d: DomainArg) -> &'static str {
    match d {
        DomainArg::Box => "box",
        DomainArg::Disc => "disc",
    }
}

/// `(N, κ)` of a preset; fig2's first kappa is read as 2·10^6.5.
pub fn preset_params(p: Preset) -> (usize, Vec<f64>) {
    match p {
        Preset::Fig1 => (10_000, vec![0.0, 2e2, 2e4, 2e6]),
        Preset::Fig2 => (1_000, vec![2.0 * 10f64.powf(6.5), 2e7, 2e8]),
    }
}

pub fn trajectories(a: &TrajectoriesArgs) -> Result<()> {
    if a.paths == 0 {
        return Err(usage("--paths must be at least 1"));
    }
    let (n, kappas, label) = match (a.preset, a.n, a.kappa.is_empty()) {
        (Some(p), None, true) => {
            let (n, k) = preset_params(p);
            (n, k, format!("{p:?}").to_lowercase())
        }
        (p, Some(n), false) => {
            let k: Vec<f64> = a.kappa.iter().map(|r| r.eval(n)).collect();
            let label = p.map(|p| format!("{p:?}").to_lowercase() + " (overridden)");
            (n, k, label.unwrap_or_else(|| "custom".into()))
        }
        _ => return Err(usage("give either --preset or both --N and --kappa")),
    };
    if n == 0 {
        return Err(usage("N must be positive"));
    }
    fs::create_dir_all(&a.out).map_err(|e| io_err(e, &a.out))?;
    let mut series = Vec::new();
    for (i, &kappa) in kappas.iter().enumerate() {
        let params = RwParams::with_beta_per_kappa(n, kappa, a.beta_per_kappa)?;
        let traj = simulate_w(&params, a.seed, a.paths)?;
        let terminal: Vec<f64> = traj.paths.iter().map(|p| p[n - 1]).collect();
        let empirical_sd = (terminal.iter().map(|w| w * w).sum::<f64>() / terminal.len() as f64).sqrt();
        let mut h = Header::new("trajectories");
        h.push("preset", &label)
            .push("regime", Regime::classify(1, n, kappa))
            .push("N", n)
            .push("kappa", num(kappa))
            .push("beta", num(params.beta))
            .push("gamma", num(params.gamma))
            .push("sigma2", num(params.sigma2))
            .push("paths", a.paths)
            .push("seed", a.seed)
            .push("terminal_sd", num(var_w(n, &params).sqrt()))
            .push("terminal_sd_empirical", num(empirical_sd));
        if a.preset == Some(Preset::Fig2) && i == 0 && a.kappa.is_empty() {
            h.push("note", "kappa = 2*10^6.5");
        }
        let path = a.out.join(format!("trajectories_k{i}.csv"));
        emit(Some(&path), &h, |w| traj.write_csv(w))?;
        let stride = n.div_ceil(1000).max(1);
        series.push(Series {
            label: format!("kappa = {kappa:e}"),
            lines: traj
                .paths
                .iter()
                .map(|p| {
                    (0..n)
                        .step_by(stride)
                        .chain(std::iter::once(n - 1))
                        .map(|j| ((j + 1) as f64, p[j]))
                        .collect()
                })
                .collect(),
        });
    }
    if a.format == Format::CsvSvg {
        let path = a.out.join("trajectories.svg");
        let svg = svg_polylines(&format!("W_n, N = {n}, {label}"), &series, 900.0, 500.0);
        fs::write(&path, svg).map_err(|e| io_err(e, &path))?;
    }
    Ok(())
}

/// Reference grid for the continuum limits: chain N=1024 (d=1), box 64 (d=2), 16 (d=3).
fn limit_geometry(d: usize) -> Result<Arc<GridGeometry>> {
    Ok(match d {
        1 => geometry(1, 1024, DomainArg::Box, ClassArg::Chain)?,
        2 => geometry(2, 64, DomainArg::Box, ClassArg::General)?,
        3 => geometry(3, 16, DomainArg::Box, ClassArg::General)?,
        _ => return Err(usage("d must be 1, 2 or 3")),
    })
}

/// Limit of `Var[(Ψ_N, f)]` from the discrete eigenbasis on a fine grid:
/// `‖f‖²_{-1,-Δ}` (sub), `‖f‖²_{-2,Δ²}` (super), `r‖f‖²_{-2,-Δ+rΔ²}` (critical).
fn continuum_limit(p: &ModelParams, f: &TestFunction) -> Result<f64> {
    let g = limit_geometry(p.dim)?;
    let w = f.on_unknowns(&g);
    let r = p.kappa / (2.0 * p.dim as f64 * (p.n as f64).powi(2));
    let (op, s, scale) = match p.regime {
        Regime::Sub => (continuum_operator(SpectralTag::NegLaplacian, g.clone())?, 1.0, 1.0),
        Regime::Super => (continuum_operator(SpectralTag::Bilaplacian, g.clone())?, 2.0, 1.0),
        Regime::Critical => {
            let spec = MixedOperatorSpec::new(OperatorKind::Mixed, r, g.h())?;
            (semiflex::dirichlet::assemble(spec, g.clone(), Normalization::Unnormalized)?, 2.0, r)
        }
    };
    let k = op.n().min(64);
    let res = spectral::spectrum(&op, k)?;
    Ok(scale * negative_norm(&w, &res, s)?)
}

pub fn phase_scan(a: &PhaseScanArgs) -> Result<()> {
    if a.f != "sin" {
        return Err(usage(format!("unknown test function '{}' (available: sin)", a.f)));
    }
    if a.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let forced: Option<Regime> = a.regime.as_deref().map(str::parse).transpose()?;
    let f = TestFunction::sine_mode(a.d);
    let mut rows = Vec::new();
    let mut regimes = Vec::new();
    for &n in &a.n {
        let kappa = a.kappa_rule.eval(n);
        let mut p = ModelParams::new(a.d, n, kappa)?;
        if let Some(r) = forced {
            p = p.with_regime(r);
        }
        let class = if a.d == 1 { ClassArg::Chain } else { ClassArg::General };
        let g = geometry(a.d, n, DomainArg::Box, class)?;
        let exact = exact_pairing_variance(&p, g.clone(), &f)?;
        let ens = field::sample(p, g, a.samples, a.seed)?;
        let xs = pair(&ens, &f);
        let mc = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        let limit = continuum_limit(&p, &f)?;
        regimes.push(format!("N={n}:{}", p.regime));
        rows.push([n as f64, kappa, exact, mc, limit, exact / limit]);
    }
    let mut h = Header::new("phase-scan");
    h.push("regime", regimes.join(" "))
        .push("d", a.d)
        .push("N", a.n.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","))
        .push("kappa_rule", a.kappa_rule)
        .push("f", "prod sqrt(2) sin(pi x_i)")
        .push("samples", a.samples)
        .push("seed", a.seed)
        .push("lattice", if a.d == 1 { "chain" } else { "general" });
    emit(a.out.as_deref(), &h, |w| {
        writeln!(w, "N,kappa,var_exact,var_mc,limit,ratio")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{},{}", r[0], num(r[1]), num(r[2]), num(r[3]), num(r[4]), num(r[5]))?;
        }
        Ok(())
    })
}

pub fn green(a: &GreenArgs) -> Result<()> {
    let g = geometry(a.d, a.n, a.domain, a.classification)?;
    let kappa = a.kappa.eval(a.n);
    let gf = green_function(g.clone(), kappa)?;
    let mut h = Header::new("green");
    h.push("regime", Regime::classify(a.d, a.n, kappa))
        .push("d", a.d)
        .push("N", a.n)
        .push("kappa_rule", a.kappa)
        .push("kappa", num(kappa))
        .push("domain", domain_label(a.domain))
        .push("classification", class_label(a.classification))
        .push("unknowns", g.num_unknowns());
    emit(a.out.as_deref(), &h, |w| gf.write_csv(w))
}

pub fn sample(a: &SampleArgs) -> Result<()> {
    if a.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let g = geometry(a.d, a.n, a.domain, a.classification)?;
    let kappa = a.kappa.eval(a.n);
    let p = ModelParams::new(a.d, a.n, kappa)?;
    let ens = field::sample(p, g.clone(), a.samples, a.seed)?;
    let mut h = Header::new("sample");
    h.push("regime", p.regime)
        .push("d", a.d)
        .push("N", a.n)
        .push("kappa_rule", a.kappa)
        .push("kappa", num(kappa))
        .push("domain", domain_label(a.domain))
        .push("classification", class_label(a.classification))
        .push("samples", a.samples)
        .push("seed", a.seed)
        .push("pairing_scale", num(p.pairing_scale()));
    emit(a.out.as_deref(), &h, |w| ens.write_csv(w))?;
    if let Some(path) = &a.pairings {
        let xs = pair(&ens, &TestFunction::sine_mode(a.d));
        emit(Some(path), &h, |w| field::write_pairings_csv(&xs, w))?;
    }
    Ok(())
}

/// `a..b` doubles from `a` to `b`; otherwise a comma list.
pub fn parse_ladder(s: &str) -> Result<Vec<usize>> {
    let bad = || usage(format!("invalid ladder '{s}' (expected a..b or a comma list)"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo == 0 || hi < lo {
            return Err(bad());
        }
        let mut v = Vec::new();
        let mut n = lo;
        while n <= hi {
            v.push(n);
            n *= 2;
        }
        Ok(v)
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(bad))
            .collect()
    }
}

pub fn converge(a: &ConvergeArgs) -> Result<()> {
    let kind: OperatorKind = a.op.parse()?;
    let mut case = manufactured(kind, a.d)?;
    if let Some(r) = &a.rho {
        case = case.with_rho(r.parse::<RhoRule>()?);
    }
    if let Some(l) = &a.ladder {
        case = case.with_ladder(parse_ladder(l)?);
    }
    let report = rate_report(&case)?;
    let mut h = Header::new("converge");
    h.push("regime", match kind {
        OperatorKind::NegLaplacian => "sub",
        OperatorKind::Mixed => "critical",
        OperatorKind::Bilaplacian => "super",
    })
    .push("op", kind.label())
    .push("d", a.d)
    .push("rho", case.rho)
    .push("ladder", case.ladder.iter().map(|n| format!("1/{n}")).collect::<Vec<_>>().join(","))
    .push("profile", format!("{:?}", case.profile))
    .push("c_fit", num(report.c_fit))
    .push("result", if report.pass() { "PASS" } else { "FAIL" });
    emit(a.out.as_deref(), &h, |w| report.write_csv(w))?;
    if a.out.is_some() {
        println!(
            "converge {} d={} rho={}: {}",
            kind.label(),
            a.d,
            case.rho,
            if report.pass() { "PASS" } else { "FAIL" }
        );
    }
    Ok(())
}

pub fn spectrum(a: &SpectrumArgs) -> Result<()> {
    let tag: SpectralTag = a.op.parse()?;
    let g = geometry(a.d, a.n, a.domain, a.classification)?;
    let op = continuum_operator(tag, g.clone())?;
    let res = spectral::spectrum_with(
        &op,
        a.k,
        spectral::SpectrumOptions {
            vectors: false,
            ..Default::default()
        },
    )?;
    let mut h = Header::new("spectrum");
    h.push("regime", match tag {
        SpectralTag::NegLaplacian => "sub",
        SpectralTag::Mixed => "critical",
        SpectralTag::Bilaplacian => "super",
    })
    .push("op", tag.label())
    .push("d", a.d)
    .push("N", a.n)
    .push("k", a.k)
    .push("domain", domain_label(a.domain))
    .push("classification", class_label(a.classification));
    emit(a.out.as_deref(), &h, |w| res.write_csv(w))?;
    if let Some(path) = &a.weyl {
        let fit = weyl_check(&res)?;
        let mut wh = h.clone();
        wh.push("cutoff", num(fit.cutoff))
            .push("window", fit.window)
            .push("fitted", format!("{}..{}", fit.fitted.0, fit.fitted.1))
            .push("slope", num(fit.slope))
            .push("expected_slope", num(tag.order() as f64 / a.d as f64));
        emit(Some(path), &wh, |w| res.write_weyl_csv(&fit, w))?;
    }
    Ok(())
}
