//! Subcommand bodies. Every command resolves and validates its whole
//! configuration before computing anything, and writes its outputs last.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use walshdiv::orlicz::{aux_bounds, build_phi, check_phi_properties, check_slope_monotonicity, slope_certificates, PiecewiseConvex};
use walshdiv::sequence::{classify_sequence, generate_sequence_from, SequenceKind};
use walshdiv::walsh::{check_resolution, kernel_scan, WalshCoefficients, DEFAULT_RESOLUTION_CAP};
use walshdiv::witness::{
    build_lemma1, extract_e, flat_after, modulus_check, plan_levels, spectral_relocate, witness_sup, Check,
    Lemma1Config, PlanConfig, PointEval, Relocation,
};
use walshdiv::{DyadicPoint, ExpFloat, SpectralNat};

use crate::args::*;
use crate::output::*;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

fn versioned<T: Serialize>(body: T) -> Vec<u8> {
    to_json(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })
}

/// Digits `b_1 b_2 …` of `x` packed four per hex character, `b_1` highest.
pub fn hex_digits(x: &DyadicPoint) -> String {
    let digits = x.digit_string();
    digits
        .as_bytes()
        .chunks(4)
        .map(|c| {
            let v = c.iter().enumerate().fold(0u32, |a, (i, &b)| a | (((b == b'1') as u32) << (3 - i)));
            char::from_digit(v, 16).expect("nibble")
        })
        .collect()
}

/// Decimal when short, otherwise the magnitude as a power of two.
fn short(n: &SpectralNat) -> String {
    let s = n.to_string();
    if s.len() <= 24 {
        s
    } else {
        format!("≈2^{:.3}", n.log2_approx())
    }
}

struct Defaults {
    kind: SequenceKind,
    start: u64,
    count: usize,
}

struct ResolvedSeq {
    label: String,
    start: Option<u64>,
    terms: Vec<SpectralNat>,
}

fn resolve_seq(src: &SeqSource, d: Defaults) -> CliResult<ResolvedSeq> {
    if let Some(list) = &src.terms {
        let terms = list
            .split(',')
            .map(|t| t.parse::<SpectralNat>())
            .collect::<Result<Vec<_>, _>>()?;
        if terms.is_empty() {
            return Err(config_err("--terms is empty"));
        }
        return Ok(ResolvedSeq {
            label: "explicit".into(),
            start: None,
            terms,
        });
    }
    let kind = match &src.seq {
        Some(s) => s.parse::<SequenceKind>()?,
        None => d.kind,
    };
    let start = src.start.unwrap_or(d.start);
    let count = src.count.unwrap_or(d.count);
    if count == 0 || count > 1 << 16 {
        return Err(config_err(format!("count {count} outside 1..=65536")));
    }
    Ok(ResolvedSeq {
        label: kind.to_string(),
        start: Some(start),
        terms: generate_sequence_from(kind, start, count)?,
    })
}

fn canonical(start: u64, count: usize) -> Defaults {
    Defaults {
        kind: SequenceKind::NestedCanonical,
        start,
        count,
    }
}

pub fn seq_gen(a: &SeqGenArgs, f: &FileConfig) -> CliResult<()> {
    let seq = resolve_seq(&a.source.merged(f), canonical(1, 8))?;
    let format = a.format.or(f.format).unwrap_or(Format::Json);
    let out = a.out.clone().or_else(|| f.out.clone());
    let bytes = match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Gen {
                kind: String,
                start: Option<u64>,
                terms: Vec<String>,
                variation: Vec<u64>,
            }
            versioned(Gen {
                kind: seq.label,
                start: seq.start,
                terms: seq.terms.iter().map(|t| t.to_string()).collect(),
                variation: seq.terms.iter().map(SpectralNat::variation).collect(),
            })
        }
        Format::Csv => {
            let mut s = String::from("position,n,variation\n");
            for (i, t) in seq.terms.iter().enumerate() {
                writeln!(s, "{},{},{}", i + 1, t, t.variation()).expect("string write");
            }
            s.into_bytes()
        }
    };
    emit(out.as_deref(), &bytes)
}

pub fn seq_classify(a: &ClassifyArgs, f: &FileConfig) -> CliResult<()> {
    let seq = resolve_seq(&a.source.merged(f), canonical(1, 8))?;
    let out = a.out.clone().or_else(|| f.out.clone());
    let report = classify_sequence(&seq.terms)?;
    let rows = vec![
        Row::value("nested", report.nested),
        Row::value("separated", report.separated),
        Row::value("lacunary-ratio", report.lacunary_ratio.approx),
    ];
    emit(out.as_deref(), &versioned(&report))?;
    summarize(&rows, out.is_none())
}

pub fn kernel(a: &KernelArgs, f: &FileConfig) -> CliResult<()> {
    let n_max = a.n_max.or(f.n_max).unwrap_or(4096);
    if n_max == 0 {
        return Err(config_err("n-max must be at least 1"));
    }
    let bits = 64 - n_max.leading_zeros();
    let res = a.resolution.or(f.resolution).unwrap_or(bits);
    if res < bits {
        return Err(config_err(format!("resolution {res} cannot resolve n = {n_max}")));
    }
    check_resolution(res, DEFAULT_RESOLUTION_CAP)?;
    let out = a.out.clone().or_else(|| f.out.clone());
    let rows = kernel_scan(n_max, res)?;
    let mut csv = String::from("n,V,norm_num,norm_den,lower_ok,upper_ok\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.n,
            r.variation,
            r.norm.numer(),
            r.norm.denom(),
            r.lower_ok,
            r.upper_ok
        )
        .expect("string write");
    }
    let failures = rows.iter().filter(|r| !(r.lower_ok && r.upper_ok)).count();
    emit(out.as_deref(), csv.as_bytes())?;
    summarize(
        &[Row::from(&Check::new(
            "kernel-sandwich",
            failures == 0,
            format!("V/8 ≤ ‖D_n‖₁ ≤ V for 1 ≤ n ≤ {n_max}: {failures} failures"),
        ))],
        out.is_none(),
    )
}

fn lemma1_config(dense_cap: Option<u32>) -> CliResult<Lemma1Config> {
    let mut c = Lemma1Config::default();
    if let Some(cap) = dense_cap {
        if cap > 26 {
            return Err(config_err(format!("dense-cap {cap} above 26")));
        }
        c.dense_cap = cap;
    }
    Ok(c)
}

/// Largest factor count for which the exact exceptional-set recursion runs.
const E_FACTOR_LIMIT: usize = 256;

pub fn lemma1(a: &Lemma1Args, f: &FileConfig) -> CliResult<()> {
    let seq = resolve_seq(&a.source.merged(f), canonical(1, 12))?;
    let nu = a.nu.or(f.nu).unwrap_or(1);
    let config = lemma1_config(a.dense_cap.or(f.dense_cap))?;
    let samples = a.samples.or(f.samples).unwrap_or(100);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let out = a.out.clone().or_else(|| f.out.clone());
    if nu == 0 || nu > seq.terms.len() {
        return Err(config_err(format!("nu {nu} outside the prefix of {}", seq.terms.len())));
    }

    let art = build_lemma1(&seq.terms, nu, &config)?;
    let mut rows: Vec<Row> = art.checks.iter().map(Row::from).collect();
    let e = if art.deltas.len() <= E_FACTOR_LIMIT {
        let e = extract_e(&art)?;
        let min = e.cells.iter().map(|c| c.any.approx).fold(f64::INFINITY, f64::min);
        rows.push(Row::from(&Check::new(
            "E-quarter",
            e.all_at_least_quarter,
            format!("min cell measure {min}"),
        )));
        Some(e)
    } else {
        rows.push(Row::from(&Check::unverified(
            "E-quarter",
            format!("{} factors above the exact limit {E_FACTOR_LIMIT}", art.deltas.len()),
        )));
        None
    };

    #[derive(Serialize)]
    struct Witnessed {
        x_bits: String,
        factor: usize,
        source_k: usize,
        value: f64,
    }
    let res = art.degree.max_exp().map_or(1, |t| t as u32 + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = art.variation as f64 / 16.0;
    let cap = art.anchor.as_ref().map(|(_, c)| c.clone());
    let mut witnesses = Vec::new();
    let mut witness_ok = true;
    for _ in 0..samples {
        let x = DyadicPoint::random(res, &mut rng);
        if let Some((factor, k, v)) = PointEval::new(&art, &x).witness::<ExpFloat>()? {
            let v = v.to_f64();
            witness_ok &= v >= theta && k > nu && cap.as_ref().is_none_or(|c| seq.terms[k - 1] <= *c);
            witnesses.push(Witnessed {
                x_bits: hex_digits(&x),
                factor,
                source_k: k,
                value: v,
            });
        }
    }
    rows.push(Row::from(&Check::new(
        "witness-cut",
        witness_ok,
        format!("{} of {samples} points witnessed, values ≥ V/16, k within the cap", witnesses.len()),
    )));

    #[derive(Serialize)]
    struct Out<'a> {
        sequence: &'a str,
        #[serde(flatten)]
        record: walshdiv::witness::Lemma1Record,
        seed: u64,
        witnesses: Vec<Witnessed>,
    }
    let bytes = versioned(Out {
        sequence: &seq.label,
        record: art.record(e),
        seed,
        witnesses,
    });
    emit(out.as_deref(), &bytes)?;
    summarize(&rows, out.is_none())
}

fn parse_phi(spec: &str, seq: &[SpectralNat]) -> CliResult<PiecewiseConvex<ExpFloat>> {
    if spec == "identity" {
        return Ok(PiecewiseConvex::linear(ExpFloat::from_f64(1.0)));
    }
    match spec.strip_prefix("canonical:").map(str::parse::<usize>) {
        Some(Ok(k)) if k >= 1 && k <= seq.len() => Ok(build_phi(seq, k)?),
        _ => Err(config_err(format!("phi `{spec}` is not `identity` or `canonical:K`"))),
    }
}

fn plan_config(horizon: usize, dense_cap: Option<u32>) -> CliResult<PlanConfig> {
    if horizon == 0 || horizon > 8 {
        return Err(config_err(format!("horizon {horizon} outside 1..=8")));
    }
    Ok(PlanConfig {
        horizon,
        lemma1: lemma1_config(dense_cap)?,
        ..PlanConfig::default()
    })
}

pub fn witness(a: &WitnessArgs, f: &FileConfig) -> CliResult<()> {
    let seq = resolve_seq(&a.source.merged(f), canonical(0, 600))?;
    let config = plan_config(a.horizon.or(f.horizon).unwrap_or(2), a.dense_cap.or(f.dense_cap))?;
    let phi = parse_phi(a.phi.as_deref().or(f.phi.as_deref()).unwrap_or("identity"), &seq.terms)?;
    let samples = a.samples.or(f.samples).unwrap_or(10_000);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let out = a.out.clone().or_else(|| f.out.clone());
    let plan_out = a.plan_out.clone().or_else(|| f.plan_out.clone());

    let planned = plan_levels(&seq.terms, &phi, &config)?;
    let plan = &planned.plan;
    let mut rows = Vec::new();
    for l in &plan.levels {
        rows.push(Row::value(
            &format!("level{}", l.j),
            format!(
                "ν = {} (n = {}), term {}, N_ν = {}, α = {}, β = {}",
                l.nu,
                short(&l.n_nu),
                l.term,
                short(&l.anchor.1),
                short(&l.n_alpha),
                short(&l.n_beta)
            ),
        ));
    }
    let total = plan.total_term();
    rows.push(Row::from(&Check::new(
        "budget",
        total <= ExpFloat::from_f64(1.0),
        format!("Σ term_j = {total}"),
    )));

    let res = plan.sample_resolution();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("x_bits,level,cut_tag,value,threshold,pass\n");
    let mut reached = 0usize;
    let mut in_e = vec![0usize; plan.levels.len()];
    for _ in 0..samples {
        let x = DyadicPoint::random(res, &mut rng);
        let s = witness_sup::<ExpFloat>(&planned, &x)?;
        let bits = hex_digits(&x);
        let mut any = false;
        for v in &s.levels {
            let kind = match planned.artifacts[v.level - 1].cut_pairs[v.factor - 1].branch {
                walshdiv::witness::Branch::A => "upper",
                walshdiv::witness::Branch::B => "lower",
            };
            any |= v.value >= v.threshold;
            in_e[v.level - 1] += v.in_e as usize;
            writeln!(
                csv,
                "{bits},{},{}:{kind},{},{},{}",
                v.level,
                v.factor,
                v.value.to_f64(),
                v.threshold.to_f64(),
                v.pass
            )
            .expect("string write");
        }
        reached += any as usize;
    }
    let fraction = if samples == 0 { 0.0 } else { reached as f64 / samples as f64 };
    rows.push(Row::from(&Check::new("eq27", true, format!("flat certificate 0 at {samples} points"))));
    rows.push(Row::from(&Check::new(
        "witness-fraction",
        samples > 0 && fraction >= 0.25,
        format!("{reached} of {samples} points reach a level threshold"),
    )));
    for (j, c) in in_e.iter().enumerate() {
        rows.push(Row::value(&format!("E-level{}", j + 1), format!("{c} of {samples} points in E")));
    }
    let thresholds: Vec<String> = plan
        .levels
        .iter()
        .map(|l| format!("{}", l.threshold::<ExpFloat>()))
        .collect();
    rows.push(Row::value("thresholds", thresholds.join(", ")));

    if let Some(p) = &plan_out {
        write_atomic(p, &versioned(plan))?;
    }
    emit(out.as_deref(), csv.as_bytes())?;
    summarize(&rows, out.is_none())
}

pub fn phi(a: &PhiArgs, f: &FileConfig) -> CliResult<()> {
    let seq = resolve_seq(&a.source.merged(f), canonical(1, 20))?;
    let knots = a.knots.or(f.knots).unwrap_or(seq.terms.len());
    if knots == 0 || knots > seq.terms.len() {
        return Err(config_err(format!("knots {knots} outside 1..={}", seq.terms.len())));
    }
    let out = a.out.clone().or_else(|| f.out.clone());

    let certs = slope_certificates(&seq.terms, knots)?;
    let monotone = check_slope_monotonicity(&certs);
    let aux = aux_bounds(&certs);
    let phi: PiecewiseConvex<ExpFloat> = build_phi(&seq.terms, knots)?;
    let report = check_phi_properties(&phi);
    let rows = vec![
        Row::from(&Check::new(
            "eq19",
            monotone.is_ok(),
            match monotone {
                Ok(()) => format!("slopes strictly increasing over {knots} knots"),
                Err(i) => format!("slope {i} does not increase"),
            },
        )),
        Row::from(&Check::new(
            "eq21",
            aux.iter().all(|b| b.gap_ok && b.bound_ok),
            format!("auxiliary bound at {} knots", aux.len()),
        )),
        Row::from(&Check::new("convex", report.convex, "φ convex")),
        Row::from(&Check::new("strictly-convex", report.strictly_convex, "strict between knots")),
        Row::from(&Check::new(
            "delta2",
            report.doubling_constant.is_finite(),
            format!("φ(2u) ≤ {} φ(u) on the scanned range", report.doubling_constant),
        )),
        Row::value(
            "delta2-c2",
            format!(
                "φ(2^(m+1)) ≤ 2 φ(2^m) fails at {} of {} exponents",
                report.delta2_failures, report.scanned_exponents
            ),
        ),
    ];

    #[derive(Serialize)]
    struct Out<'a> {
        sequence: &'a str,
        knots: usize,
        certificates: Vec<walshdiv::orlicz::SlopeCertificate>,
        aux_bounds: Vec<walshdiv::orlicz::AuxBound>,
        report: walshdiv::orlicz::PhiReport,
        phi: PiecewiseConvex<ExpFloat>,
    }
    let bytes = versioned(Out {
        sequence: &seq.label,
        knots,
        certificates: certs,
        aux_bounds: aux,
        report,
        phi,
    });
    emit(out.as_deref(), &bytes)?;
    summarize(&rows, out.is_none())
}

/// Random polynomial with coefficients in `[-3, 3]` at the given resolution.
pub fn random_polynomial(res: u32, rng: &mut ChaCha8Rng) -> WalshCoefficients<i64> {
    use rand::Rng;
    let coeffs = (0..1usize << res).map(|_| rng.gen_range(-3i64..=3)).collect();
    WalshCoefficients::new(res, coeffs).expect("length matches resolution")
}

pub fn relocate(a: &RelocateArgs, f: &FileConfig) -> CliResult<()> {
    let seq = resolve_seq(&a.source.merged(f), canonical(0, 600))?;
    let config = plan_config(a.horizon.or(f.horizon).unwrap_or(2), None)?;
    let polys = a.polys.or(f.polys).unwrap_or(100);
    let poly_res = a.poly_resolution.or(f.poly_resolution).unwrap_or(6);
    let samples = a.samples.or(f.samples).unwrap_or(100);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let out = a.out.clone().or_else(|| f.out.clone());
    if poly_res > 16 {
        return Err(config_err(format!("poly-resolution {poly_res} above 16")));
    }

    let phi = PiecewiseConvex::linear(ExpFloat::from_f64(1.0));
    let planned = plan_levels(&seq.terms, &phi, &config)?;
    let plan = &planned.plan;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let res = plan.sample_resolution();
    let xs: Vec<DyadicPoint> = (0..samples).map(|_| DyadicPoint::random(res, &mut rng)).collect();
    let mut relocs: Vec<Relocation<i64>> = Vec::with_capacity(polys);
    let mut modulus_ok = true;
    for r in 1..=polys {
        let q = random_polynomial(poly_res, &mut rng);
        let rel = spectral_relocate(&q, plan, r)?;
        modulus_ok &= modulus_check(&q, &rel, &xs).passed();
        relocs.push(rel);
    }
    let mut rows: Vec<Row> = ["eq31", "eq32", "eq33"]
        .iter()
        .map(|tag| {
            let passed = relocs
                .iter()
                .filter(|r| r.checks.iter().any(|c| c.tag == *tag && c.passed()))
                .count();
            Row::from(&Check::new(tag, passed == polys, format!("{passed} of {polys} polynomials")))
        })
        .collect();
    rows.push(Row::from(&Check::new(
        "modulus",
        modulus_ok,
        format!("|Q*_r| = |Q_r| at {samples} points for every r"),
    )));
    for l in &plan.levels {
        rows.push(Row::from(&flat_after(&relocs, plan, l.j)?));
    }

    #[derive(Serialize)]
    struct Out<'a> {
        sequence: &'a str,
        seed: u64,
        poly_resolution: u32,
        relocations: &'a [Relocation<i64>],
    }
    let bytes = versioned(Out {
        sequence: &seq.label,
        seed,
        poly_resolution: poly_res,
        relocations: &relocs,
    });
    emit(out.as_deref(), &bytes)?;
    summarize(&rows, out.is_none())
}
