use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use tev_core::field::{encode_hsv, GridSpec, RgbImage};

use super::{csv_to_string, load_corpus, write_output};
use crate::context::{overlay, usage, CliResult, Context};

#[derive(Args, Debug)]
pub struct VizArgs {
    /// Corpus file [default: corpus.tevd]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Sequence index [default: 0]
    #[arg(long)]
    index: Option<usize>,
    /// PPM with every frame side by side [default: sequence.ppm]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single frame to render instead of the whole sequence
    #[arg(long)]
    frame: Option<usize>,
    /// Displacement mapped to full brightness, mm [default: corpus data range]
    #[arg(long)]
    v_max: Option<f64>,
    /// Pixels per grid node [default: 4]
    #[arg(long)]
    scale: Option<usize>,
    /// Gnuplot vector CSV (x, y, dx, dy in mm) of the rendered frame, or the last frame
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VizSettings {
    data: PathBuf,
    index: usize,
    out: PathBuf,
    frame: Option<usize>,
    v_max: Option<f64>,
    scale: usize,
    csv: Option<PathBuf>,
}

impl Default for VizSettings {
    fn default() -> Self {
        VizSettings {
            data: "corpus.tevd".into(),
            index: 0,
            out: "sequence.ppm".into(),
            frame: None,
            v_max: None,
            scale: 4,
            csv: None,
        }
    }
}

pub fn run(args: VizArgs, ctx: &Context) -> CliResult<()> {
    let mut s: VizSettings = ctx.section("viz")?;
    overlay!(s, args, [data, index, out, frame, v_max, scale, csv]);
    ctx.echo("viz", &s)?;
    if s.scale == 0 {
        return Err(usage("--scale must be at least 1"));
    }
    let corpus = load_corpus(ctx, &s.data)?;
    let seq = corpus.sequences.get(s.index).ok_or_else(|| {
        usage(format!(
            "index {} is outside a {}-sequence corpus",
            s.index,
            corpus.len()
        ))
    })?;
    let frames = match s.frame {
        Some(k) if k < seq.len() => &seq.frames[k..=k],
        Some(k) => return Err(usage(format!("frame {k} is outside a {}-frame sequence", seq.len()))),
        None => &seq.frames[..],
    };
    let v_max = s.v_max.unwrap_or(corpus.header.data_range);
    let tiles = frames
        .iter()
        .map(|f| Ok(encode_hsv(f, v_max)?.upscale(s.scale)))
        .collect::<CliResult<Vec<_>>>()?;
    write_output(ctx, &s.out, &RgbImage::hconcat(&tiles, 1).to_ppm())?;
    let class = seq.label.map_or("unlabelled", |c| c.name());
    println!(
        "sequence {}: {class}, {} frames, v_max {v_max:.4} mm",
        s.index,
        seq.len()
    );
    if let Some(path) = &s.csv {
        let frame = frames.last().expect("sequences are nonempty");
        let grid = GridSpec {
            rows: frame.rows(),
            cols: frame.cols(),
            ..GridSpec::default()
        };
        let bytes = csv_to_string(|w| {
            use std::io::Write;
            writeln!(w, "# x y dx dy")?;
            for r in 0..frame.rows() {
                for c in 0..frame.cols() {
                    let [x, y] = grid.node(r, c);
                    writeln!(w, "{x:.4} {y:.4} {:.6} {:.6}", frame.dx(r, c), frame.dy(r, c))?;
                }
            }
            Ok(())
        })?;
        write_output(ctx, path, &bytes)?;
    }
    Ok(())
}
