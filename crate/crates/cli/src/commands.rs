//! The batch commands and the artifacts they read and write.
//!
//! Layout below `out`:
//!
//! ```text
//! data/<turbine>.csv            synth: sensor data (ingest format)
//! labels/<turbine>.csv          synth: timestamp,regime
//! truth.csv                     synth: per-epoch majority regime
//! epochs.csv, correlations.csv  ingest
//! labels.csv, silhouette_table.csv, clusters/<turbine>/{centroids,dendrogram}.json
//! boundaries.json, boundaries_per_turbine.json, histogram.csv, wind_pdf.csv
//! assignments.csv, allocation_changes.csv, allocation_change_histogram.csv
//! report.txt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::{json, Value};
use turbine_states::correlation::{dump_line, format_sig15};
use turbine_states::states::StateBoundaries;
use turbine_states::synthetic::{generate_dataset, turbine_name, write_labels_csv, write_turbine_csv};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{
    assign_all, change_rates, cluster_turbine, correlation_matrices, fit_boundaries, ingest_all,
    label_rows, retained_epochs, with_pool, Assignment, BoundaryResult, ChangeRate, LabelRow,
    TurbineClustering,
};

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn opt(v: Option<f64>) -> String {
    v.map(format_sig15).unwrap_or_default()
}

pub struct SynthOutput {
    pub files: Vec<PathBuf>,
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthOutput, CliError> {
    cfg.validate()?;
    let synth = cfg.synth_config()?;
    let dataset = with_pool(cfg.jobs, || generate_dataset(&synth))??;
    let data_dir = cfg.out.join("data");
    let label_dir = cfg.out.join("labels");
    fs::create_dir_all(&data_dir)?;
    fs::create_dir_all(&label_dir)?;
    let mut files = Vec::new();
    let mut truth = String::from("turbine,epoch_start,majority_regime,majority_cluster,mismatched\n");
    for (i, t) in dataset.turbines.iter().enumerate() {
        let name = turbine_name(i);
        let data = data_dir.join(format!("{name}.csv"));
        let labels = label_dir.join(format!("{name}.csv"));
        write_turbine_csv(t, &data)?;
        write_labels_csv(t, &labels)?;
        for (start, regime) in t.epoch_majority(dataset.epoch_length) {
            let _ = writeln!(
                truth,
                "{name},{start},{},{},{}",
                regime.map_or("off", |r| r.as_str()),
                regime.map_or(String::new(), |r| r.cluster_label().to_string()),
                u8::from(t.mismatched.contains(&start))
            );
        }
        files.push(data);
        files.push(labels);
    }
    let truth_path = cfg.out.join("truth.csv");
    write_text(&truth_path, &truth)?;
    files.push(truth_path);
    info!("synthesized {} turbines into {}", dataset.turbines.len(), cfg.out.display());
    Ok(SynthOutput { files })
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<usize, CliError> {
    cfg.validate()?;
    let turbines = ingest_all(cfg)?;
    let mut epochs = create(&cfg.out.join("epochs.csv"))?;
    writeln!(epochs, "turbine,epoch_start,mean_wind_speed,valid_count,valid")?;
    let mut dump = create(&cfg.out.join("correlations.csv"))?;
    let mut total = 0;
    for t in &turbines {
        for s in &t.summaries {
            writeln!(
                epochs,
                "{},{},{},{},{}",
                s.turbine_id,
                s.epoch_start,
                opt(s.mean_wind_speed),
                s.valid_count,
                s.valid
            )?;
        }
        for (c, _) in correlation_matrices(t, cfg)? {
            writeln!(dump, "{}", dump_line(&c))?;
        }
        total += t.epochs.len();
    }
    epochs.flush()?;
    dump.flush()?;
    Ok(total)
}

fn centroid_doc(c: &TurbineClustering) -> Value {
    let s = &c.solution;
    let clusters: BTreeMap<String, Value> = (0..s.n_clusters())
        .map(|i| {
            (
                (i + 1).to_string(),
                json!({
                    "size": s.sizes[i],
                    "internal_distance": s.internal_distances[i],
                    "matrix": s.centroids[i].to_rows(),
                }),
            )
        })
        .collect();
    json!({
        "turbine": c.turbine_id,
        "channels": c.channels,
        "n_clusters": s.n_clusters(),
        "mean_silhouette": s.silhouettes.as_ref().map(|x| x.mean),
        "seed": s.seed,
        "restarts": s.restarts,
        "clusters": clusters,
    })
}

fn dendrogram_doc(c: &TurbineClustering) -> Value {
    let s = &c.solution;
    let members = s.node_members();
    let nodes: Vec<Value> = members
        .iter()
        .enumerate()
        .map(|(id, m)| {
            let centroid = turbine_states::SquareMatrix::mean_of(m.iter().map(|&i| &c.matrices[i].entries));
            json!({
                "node": id,
                "size": m.len(),
                "centroid": centroid.map(|x| x.to_rows()),
            })
        })
        .collect();
    let splits: Vec<Value> = s
        .dendrogram
        .iter()
        .enumerate()
        .map(|(step, sp)| json!({"step": step + 1, "parent": sp.parent, "children": sp.children}))
        .collect();
    let leaves: BTreeMap<String, usize> = s
        .leaf_nodes
        .iter()
        .enumerate()
        .map(|(i, &n)| ((i + 1).to_string(), n))
        .collect();
    json!({"splits": splits, "leaves": leaves, "nodes": nodes})
}

pub struct ClusterOutput {
    pub clusterings: Vec<TurbineClustering>,
    pub rows: Vec<LabelRow>,
}

pub fn cmd_cluster(cfg: &RunConfig) -> Result<ClusterOutput, CliError> {
    cfg.validate()?;
    let turbines = ingest_all(cfg)?;
    let results = with_pool(cfg.jobs, || {
        use rayon::prelude::*;
        turbines
            .par_iter()
            .map(|t| cluster_turbine(t, cfg))
            .collect::<Vec<_>>()
    })?;
    let mut clusterings = Vec::new();
    for r in results {
        if let Some(c) = r? {
            clusterings.push(c);
        }
    }
    if clusterings.is_empty() {
        return Err(CliError::Data("no turbine has enough valid epochs to cluster".into()));
    }
    let rows: Vec<LabelRow> = clusterings.iter().flat_map(label_rows).collect();
    write_label_rows(&cfg.out.join("labels.csv"), &rows)?;

    let mut table = String::from("turbine,n_clusters,min,q1,median,mean,q3,max\n");
    for c in &clusterings {
        for r in &c.table {
            let s = &r.summary;
            let _ = writeln!(
                table,
                "{},{},{},{},{},{},{},{}",
                c.turbine_id,
                r.n_clusters,
                format_sig15(s.min),
                format_sig15(s.q1),
                format_sig15(s.median),
                format_sig15(s.mean),
                format_sig15(s.q3),
                format_sig15(s.max)
            );
        }
        let dir = cfg.out.join("clusters").join(&c.turbine_id);
        write_json(&dir.join("centroids.json"), &centroid_doc(c))?;
        write_json(&dir.join("dendrogram.json"), &dendrogram_doc(c))?;
    }
    write_text(&cfg.out.join("silhouette_table.csv"), &table)?;
    Ok(ClusterOutput { clusterings, rows })
}

pub fn write_label_rows(path: &Path, rows: &[LabelRow]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "turbine,epoch_start,cluster,silhouette,mean_wind_speed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.turbine,
            r.epoch_start,
            r.cluster,
            opt(r.silhouette),
            format_sig15(r.mean_wind_speed)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_label_rows(path: &Path) -> Result<Vec<LabelRow>, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!(
            "{} not found; run `cluster` first",
            path.display()
        )));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64, CliError> {
            rec[i].parse().map_err(|_| bad(format!("bad number `{}`", &rec[i])))
        };
        rows.push(LabelRow {
            turbine: rec[0].to_string(),
            epoch_start: rec[1].parse().map_err(|_| bad(format!("bad epoch `{}`", &rec[1])))?,
            cluster: rec[2].parse().map_err(|_| bad(format!("bad cluster `{}`", &rec[2])))?,
            silhouette: if rec[3].is_empty() { None } else { Some(num(3)?) },
            mean_wind_speed: num(4)?,
        });
    }
    if rows.is_empty() {
        return Err(bad("no labelled epochs".into()));
    }
    Ok(rows)
}

fn boundaries_json(b: &StateBoundaries) -> Value {
    json!({
        "method": b.method,
        "v1": b.v1,
        "v2": b.v2,
        "v_nom": b.v_nom,
        "units": b.units,
        "persistence": b.persistence,
        "bin_width": b.bin_width,
    })
}

pub fn cmd_boundaries(cfg: &RunConfig) -> Result<BoundaryResult, CliError> {
    cfg.validate()?;
    let reference = cfg.v_nom_reference()?;
    let rows = read_label_rows(&cfg.out.join("labels.csv"))?;
    let result = fit_boundaries(&rows, cfg)?;
    write_json(&cfg.out.join("boundaries.json"), &boundaries_json(&result.pooled))?;

    let per: BTreeMap<String, Value> = result
        .per_turbine
        .iter()
        .map(|t| {
            let v = match &t.result {
                Ok((fits, b)) => json!({
                    "boundaries": boundaries_json(b),
                    "fits": fits.iter().map(|(k, f)| (k.to_string(), f)).collect::<BTreeMap<_, _>>(),
                }),
                Err(e) => json!({ "error": e }),
            };
            (t.turbine.clone(), v)
        })
        .collect();
    write_json(&cfg.out.join("boundaries_per_turbine.json"), &per)?;

    let h = &result.histogram;
    let labels = h.n_labels();
    let mut text = String::from("bin_lo,bin_hi,total");
    for l in 1..=labels {
        let _ = write!(text, ",count_{l}");
    }
    for l in 1..=labels {
        let _ = write!(text, ",rescaled_{l}");
    }
    text.push('\n');
    for b in 0..h.n_bins() {
        let _ = write!(
            text,
            "{},{},{}",
            format_sig15(h.bin_edge(b)),
            format_sig15(h.bin_edge(b + 1)),
            h.totals[b]
        );
        for c in &h.counts[b] {
            let _ = write!(text, ",{c}");
        }
        match &h.rescaled[b] {
            Some(r) => r.iter().for_each(|x| {
                let _ = write!(text, ",{}", format_sig15(*x));
            }),
            None => text.push_str(&",".repeat(labels)),
        }
        text.push('\n');
    }
    write_text(&cfg.out.join("histogram.csv"), &text)?;

    // per-turbine empirical densities of the retained epochs
    let mut pdf = String::from("turbine,cluster,bin_lo,bin_hi,density\n");
    let mut counts: BTreeMap<(&str, usize), BTreeMap<usize, usize>> = BTreeMap::new();
    let mut sizes: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    for r in rows.iter().filter(|r| result.retained.contains(&(r.turbine.clone(), r.epoch_start))) {
        let v = r.mean_wind_speed / reference;
        if !(v >= 0.0) {
            continue;
        }
        let bin = (v / cfg.pdf_bin_width).floor() as usize;
        *counts.entry((&r.turbine, r.cluster)).or_default().entry(bin).or_default() += 1;
        *sizes.entry((&r.turbine, r.cluster)).or_default() += 1;
    }
    for ((turbine, cluster), bins) in &counts {
        let n = sizes[&(*turbine, *cluster)] as f64;
        for (&b, &c) in bins {
            let _ = writeln!(
                pdf,
                "{turbine},{cluster},{},{},{}",
                format_sig15(b as f64 * cfg.pdf_bin_width),
                format_sig15((b + 1) as f64 * cfg.pdf_bin_width),
                format_sig15(c as f64 / (n * cfg.pdf_bin_width))
            );
        }
    }
    write_text(&cfg.out.join("wind_pdf.csv"), &pdf)?;
    Ok(result)
}

pub fn read_boundaries(path: &Path) -> Result<StateBoundaries, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!(
            "{} not found; run `boundaries` first",
            path.display()
        )));
    }
    let text = fs::read_to_string(path)?;
    let b: StateBoundaries = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    StateBoundaries::new(b.method, b.v1, b.v2, b.v_nom)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(b)
}

pub struct AssignOutput {
    pub assignments: Vec<Assignment>,
    pub rates: Vec<ChangeRate>,
}

pub fn cmd_assign(cfg: &RunConfig) -> Result<AssignOutput, CliError> {
    cfg.validate()?;
    let reference = cfg.v_nom_reference()?;
    let rows = read_label_rows(&cfg.out.join("labels.csv"))?;
    let path = cfg.boundaries.clone().unwrap_or_else(|| cfg.out.join("boundaries.json"));
    let boundaries = read_boundaries(&path)?;
    let assignments = assign_all(&rows, &boundaries, reference)?;
    let retained = retained_epochs(&rows, cfg.quantile).ok();
    let rates = change_rates(&assignments, retained.as_ref())?;

    let mut w = create(&cfg.out.join("assignments.csv"))?;
    writeln!(w, "turbine,epoch_start,mean_wind_speed,cluster,model_state,changed")?;
    for a in &assignments {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            a.turbine,
            a.epoch_start,
            format_sig15(a.mean_wind_speed),
            a.cluster,
            a.model_state,
            u8::from(a.changed())
        )?;
    }
    w.flush()?;

    let mut text = String::from("turbine,epochs,rate,filtered_epochs,filtered_rate\n");
    for r in &rates {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            r.turbine,
            r.epochs,
            format_sig15(r.rate),
            r.filtered_epochs,
            opt(r.filtered_rate)
        );
    }
    write_text(&cfg.out.join("allocation_changes.csv"), &text)?;

    // distribution of per-turbine change rates
    let width = cfg.change_bin_width;
    let per: Vec<&ChangeRate> = rates.iter().filter(|r| r.turbine != "*").collect();
    let bins = per
        .iter()
        .map(|r| (r.rate / width).floor() as usize + 1)
        .max()
        .unwrap_or(0);
    let mut all = vec![0usize; bins];
    let mut filtered = vec![0usize; bins];
    for r in &per {
        all[(r.rate / width).floor() as usize] += 1;
        if let Some(f) = r.filtered_rate {
            let b = ((f / width).floor() as usize).min(bins - 1);
            filtered[b] += 1;
        }
    }
    let mut hist = String::from("rate_lo,rate_hi,turbines,turbines_filtered\n");
    for b in 0..bins {
        let _ = writeln!(
            hist,
            "{},{},{},{}",
            format_sig15(b as f64 * width),
            format_sig15((b + 1) as f64 * width),
            all[b],
            filtered[b]
        );
    }
    write_text(&cfg.out.join("allocation_change_histogram.csv"), &hist)?;
    Ok(AssignOutput { assignments, rates })
}

/// Human-readable summary of whatever artifacts exist in `out`.
pub fn cmd_report(cfg: &RunConfig) -> Result<String, CliError> {
    let out = &cfg.out;
    let mut text = String::new();
    let rows = read_label_rows(&out.join("labels.csv"))?;
    let mut per: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    for r in &rows {
        *per.entry(&r.turbine).or_default().entry(r.cluster).or_default() += 1;
    }
    let _ = writeln!(text, "clustered epochs per turbine and cluster:");
    for (t, m) in &per {
        let sizes: Vec<String> = m.iter().map(|(c, n)| format!("{c}:{n}")).collect();
        let _ = writeln!(text, "  {t}  {}", sizes.join("  "));
    }
    if let Ok(table) = fs::read_to_string(out.join("silhouette_table.csv")) {
        let _ = writeln!(text, "\nsilhouette statistics:");
        for line in table.lines() {
            let _ = writeln!(text, "  {line}");
        }
    }
    if let Ok(b) = read_boundaries(&out.join("boundaries.json")) {
        let _ = writeln!(
            text,
            "\npooled boundaries ({:?}, units of v_nom_reference): v1={} v2={} v_nom={}",
            b.method,
            opt(b.v1),
            opt(b.v2),
            opt(b.v_nom)
        );
    }
    if let Ok(rates) = fs::read_to_string(out.join("allocation_changes.csv")) {
        let _ = writeln!(text, "\nallocation changes:");
        for line in rates.lines() {
            let _ = writeln!(text, "  {line}");
        }
    }
    write_text(&out.join("report.txt"), &text)?;
    Ok(text)
}
