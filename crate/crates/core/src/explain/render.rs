use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ExplainError, Explanation};
use crate::env::{FEATURE_NAMES, N_FEATURES};

pub const EXPLANATION_CSV_HEADER: &str = "feature,coefficient,instance_value";

const WIDTH: f64 = 640.0;
const LABEL_W: f64 = 180.0;
const TOP: f64 = 56.0;
const ROW_H: f64 = 34.0;
const BAR_H: f64 = 20.0;
const MARGIN: f64 = 70.0;

/// Paths written by [`render_explanation`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedFiles {
    pub svg: PathBuf,
    pub csv: PathBuf,
    pub summary: PathBuf,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Horizontal signed bar chart of the standardized coefficients. Positive
/// bars extend right of the axis, negative ones left; lengths are relative to
/// the largest magnitude.
pub fn explanation_svg(e: &Explanation) -> String {
    let height = TOP + ROW_H * N_FEATURES as f64 + 40.0;
    let plot_w = WIDTH - LABEL_W - 2.0 * MARGIN;
    let axis_x = LABEL_W + MARGIN + plot_w / 2.0;
    let half = plot_w / 2.0;
    let max_abs = e
        .std_coefficients
        .iter()
        .fold(0.0f64, |m, c| m.max(c.abs()));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>"#
    );
    let title = format!(
        "LIME explanation: {} (fidelity R2 = {:.3}{})",
        e.action_name(),
        e.fidelity,
        if e.is_low_trust() { ", low trust" } else { "" }
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(&title)
    );
    let _ = writeln!(
        s,
        r##"<text x="{}" y="42" text-anchor="middle" fill="#555">standardized coefficient</text>"##,
        WIDTH / 2.0
    );

    for (i, (name, &c)) in FEATURE_NAMES.iter().zip(&e.std_coefficients).enumerate() {
        let y = TOP + ROW_H * i as f64;
        let len = if max_abs > 0.0 {
            c.abs() / max_abs * half
        } else {
            0.0
        };
        let x = if c < 0.0 { axis_x - len } else { axis_x };
        let fill = if c < 0.0 { "#d62728" } else { "#2ca02c" };
        let mid = y + BAR_H / 2.0 + 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{mid}" text-anchor="end">{}</text>"#,
            LABEL_W - 8.0,
            escape(&format!("{name} = {:.3}", e.instance[i]))
        );
        let _ = writeln!(
            s,
            r#"<rect class="bar" data-feature="{}" x="{x:.3}" y="{y}" width="{len:.3}" height="{BAR_H}" fill="{fill}"/>"#,
            escape(name)
        );
        let (tx, anchor) = if c < 0.0 {
            (x - 4.0, "end")
        } else {
            (x + len + 4.0, "start")
        };
        let _ = writeln!(
            s,
            r#"<text x="{tx:.3}" y="{mid}" text-anchor="{anchor}">{c:.4}</text>"#
        );
    }
    let y0 = TOP - 6.0;
    let y1 = TOP + ROW_H * N_FEATURES as f64;
    let _ = writeln!(
        s,
        r#"<line x1="{axis_x}" y1="{y0}" x2="{axis_x}" y2="{y1}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r##"<text x="{}" y="{}" text-anchor="middle" fill="#555">{}</text>"##,
        WIDTH / 2.0,
        y1 + 24.0,
        escape(&format!(
            "intercept {:.4}, actor mean {:.4}, surrogate {:.4}",
            e.intercept, e.model_value, e.local_prediction
        ))
    );
    s.push_str("</svg>\n");
    s
}

/// Raw-unit coefficients with the explained instance, one row per feature.
pub fn explanation_csv(e: &Explanation) -> String {
    let mut s = String::from(EXPLANATION_CSV_HEADER);
    s.push('\n');
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        let _ = writeln!(s, "{name},{},{}", e.coefficients[i], e.instance[i]);
    }
    s
}

/// Parses an explanation table back into (coefficients, instance).
pub fn parse_explanation_csv(
    text: &str,
) -> Result<([f64; N_FEATURES], [f64; N_FEATURES]), ExplainError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| ExplainError::Csv(e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>().join(",") != EXPLANATION_CSV_HEADER {
        return Err(ExplainError::Csv(format!("unexpected header {:?}", header)));
    }
    let mut coef = [0.0; N_FEATURES];
    let mut inst = [0.0; N_FEATURES];
    let mut n = 0;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ExplainError::Csv(e.to_string()))?;
        if row >= N_FEATURES {
            return Err(ExplainError::Csv(format!("more than {N_FEATURES} rows")));
        }
        if &rec[0] != FEATURE_NAMES[row] {
            return Err(ExplainError::Csv(format!(
                "row {row}: expected feature {}, got {}",
                FEATURE_NAMES[row], &rec[0]
            )));
        }
        let num = |k: usize| -> Result<f64, ExplainError> {
            rec[k]
                .parse()
                .map_err(|_| ExplainError::Csv(format!("row {row}: bad number {:?}", &rec[k])))
        };
        coef[row] = num(1)?;
        inst[row] = num(2)?;
        n += 1;
    }
    if n != N_FEATURES {
        return Err(ExplainError::Csv(format!(
            "expected {N_FEATURES} rows, got {n}"
        )));
    }
    Ok((coef, inst))
}

fn summary_text(e: &Explanation) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "action: {} (dim {})", e.action_name(), e.action_dim);
    let _ = writeln!(s, "intercept: {}", e.intercept);
    let _ = writeln!(s, "fidelity_r2: {}", e.fidelity);
    let _ = writeln!(s, "low_trust: {}", e.is_low_trust());
    let _ = writeln!(s, "actor_mean: {}", e.model_value);
    let _ = writeln!(s, "surrogate_at_instance: {}", e.local_prediction);
    let _ = writeln!(
        s,
        "{:<22} {:>14} {:>14} {:>14}",
        "feature", "coefficient", "std_coef", "instance"
    );
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<22} {:>14.6} {:>14.6} {:>14.4}",
            name, e.coefficients[i], e.std_coefficients[i], e.instance[i]
        );
    }
    s
}

/// Writes `<stem>.svg`, `<stem>.csv` and `<stem>.txt` into `dir`.
pub fn render_explanation(
    e: &Explanation,
    dir: &Path,
    stem: &str,
) -> Result<RenderedFiles, ExplainError> {
    let files = RenderedFiles {
        svg: dir.join(format!("{stem}.svg")),
        csv: dir.join(format!("{stem}.csv")),
        summary: dir.join(format!("{stem}.txt")),
    };
    let write = |path: &PathBuf, body: String| {
        std::fs::write(path, body).map_err(|source| ExplainError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    std::fs::create_dir_all(dir).map_err(|source| ExplainError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write(&files.svg, explanation_svg(e))?;
    write(&files.csv, explanation_csv(e))?;
    write(&files.summary, summary_text(e))?;
    Ok(files)
}
