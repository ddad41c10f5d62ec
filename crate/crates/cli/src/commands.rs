use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};

use hnsc::decoder::{decode, DecodeOptions};
use hnsc::mesh::{load_mesh, normalize_mesh, save_mesh, MeshError, MeshFormat, TriangleMesh};
use hnsc::metrics::{evaluate, Direction};
use hnsc::nn::{deserialize, serialize, FormatError, StoredMlp};
use hnsc::param::ParamError;
use hnsc::trainer::{encode, JsonLines, Preset, TrainConfig, TrainError};

use crate::{Command, DecodeArgs, DirectionArg, EncodeArgs, EvalArgs, InfoArgs};

/// Process exit statuses. Clap itself exits with 2 on usage errors.
pub mod exit {
    pub const OTHER: u8 = 1;
    pub const IO: u8 = 3;
    pub const INPUT: u8 = 4;
    pub const TOPOLOGY: u8 = 5;
    pub const TRAINING: u8 = 6;
    pub const FORMAT: u8 = 7;
    pub const CONFIG: u8 = 8;
}

/// Maps the first recognizable error in the chain to an exit status.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<io::Error>() {
            return exit::IO;
        }
        if let Some(e) = cause.downcast_ref::<hnsc::Error>() {
            return match e {
                hnsc::Error::Mesh(MeshError::Io(_)) => exit::IO,
                hnsc::Error::Mesh(_) => exit::INPUT,
                hnsc::Error::Param(_) => exit::TOPOLOGY,
                hnsc::Error::Train(TrainError::InvalidConfig(_)) => exit::CONFIG,
                hnsc::Error::Train(_) | hnsc::Error::Nn(_) => exit::TRAINING,
                hnsc::Error::Format(_) => exit::FORMAT,
            };
        }
        if cause.is::<MeshError>() {
            return exit::INPUT;
        }
        if cause.is::<ParamError>() {
            return exit::TOPOLOGY;
        }
        if cause.is::<FormatError>() {
            return exit::FORMAT;
        }
        if cause.is::<toml::de::Error>() {
            return exit::CONFIG;
        }
    }
    exit::OTHER
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Encode(args) => cmd_encode(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Info(args) => cmd_info(args),
    }
}

fn mesh_format(path: &Path) -> Result<MeshFormat> {
    MeshFormat::from_path(path).ok_or_else(|| {
        anyhow!(MeshError::Parse {
            line: 0,
            message: format!("{}: unknown mesh extension (use .obj or .ply)", path.display()),
        })
    })
}

fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let format = mesh_format(path)?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_mesh(&bytes, format)
        .map_err(hnsc::Error::from)
        .with_context(|| format!("loading {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_config(args: &EncodeArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(name) = &args.preset {
        config.preset = Preset::parse(name).ok_or_else(|| {
            hnsc::Error::from(TrainError::InvalidConfig(format!(
                "unknown preset {name:?} (expected 50KB, 85KB, 165KB or 260KB)"
            )))
        })?;
    }
    if let (Some(h), Some(w)) = (args.hidden_layers, args.hidden_width) {
        config.preset = Preset::Custom;
        config.custom_hidden_layers = Some(h);
        config.custom_hidden_width = Some(w);
    }
    if let Some(v) = args.levels {
        config.positional_levels = v;
    }
    if let Some(v) = args.coarse_iterations {
        config.coarse_iterations = v;
    }
    if let Some(v) = args.fine_iterations {
        config.fine_iterations = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.lr {
        config.learning_rate = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.smoothing_iterations {
        config.smoothing_iterations = v;
    }
    if let Some(v) = args.smoothing_lambda {
        config.smoothing_lambda = v;
    }
    if args.no_quantize {
        config.quantize = false;
    }
    config.validate().map_err(hnsc::Error::from)?;
    Ok(config)
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let config = load_config(args)?;
    let mesh = read_mesh(&args.input)?;
    let sphere = args.import_sphere.as_deref().map(read_mesh).transpose()?;
    log::info!(
        "encoding {} ({} vertices, {} faces)",
        args.input.display(),
        mesh.vertex_count(),
        mesh.face_count()
    );
    let encoded = match &args.progress {
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            let mut sink = JsonLines(BufWriter::new(file));
            let out = encode(&mesh, &config, sphere.as_ref(), &mut sink);
            sink.0.flush().with_context(|| format!("writing {}", path.display()))?;
            out
        }
        None => encode(&mesh, &config, sphere.as_ref(), &mut JsonLines(io::stdout().lock())),
    }?;
    let bytes = serialize(&encoded.model).map_err(hnsc::Error::from)?;
    write_file(&args.output, &bytes)?;

    let r = &encoded.report;
    let loss = |l: Option<f64>| l.map_or("n/a".to_string(), |v| format!("{v:.4e}"));
    println!("parameterize_secs = {:.3}", r.parameterize_secs);
    println!("coarse_secs = {:.3}", r.coarse_secs);
    println!("fine_secs = {:.3}", r.fine_secs);
    println!("coarse_loss = {}", loss(r.coarse_loss));
    println!("fine_loss = {}", loss(r.fine_loss));
    println!("file_bytes = {}", bytes.len());
    Ok(())
}

fn read_model(path: &Path) -> Result<hnsc::nn::CompressedModel> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    deserialize(&bytes)
        .map_err(hnsc::Error::from)
        .with_context(|| format!("decoding container {}", path.display()))
}

fn cmd_decode(args: &DecodeArgs) -> Result<()> {
    let format = mesh_format(&args.output)?;
    if args.level > 10 {
        bail!("level {} is above the supported maximum of 10", args.level);
    }
    let model = read_model(&args.model)?;
    let opts = DecodeOptions {
        level: args.level,
        adaptive: args.adaptive,
        ratio_threshold: args.ratio_threshold,
        max_rounds: args.max_rounds,
        apply_fine: !args.coarse_only,
    };
    let start = Instant::now();
    let mesh = decode(&model, &opts).map_err(hnsc::Error::from)?;
    let secs = start.elapsed().as_secs_f64();
    write_file(&args.output, &save_mesh(&mesh, format))?;
    println!("vertices = {}", mesh.vertex_count());
    println!("faces = {}", mesh.face_count());
    println!("decode_secs = {secs:.3}");
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let recon = read_mesh(&args.recon)?;
    let reference = read_mesh(&args.reference)?;
    // Both meshes go through the reference's normalization.
    let (reference, norm) = normalize_mesh(&reference).map_err(hnsc::Error::from)?;
    let recon = recon.transformed(|p| norm.apply(p));
    let direction = match args.direction {
        DirectionArg::Symmetric => Direction::Symmetric,
        DirectionArg::ReconToRef => Direction::ReconToRef,
        DirectionArg::RefToRecon => Direction::RefToRecon,
    };
    let report = evaluate(&recon, &reference, args.samples, args.seed, direction);
    print!("{}", report.to_text());
    println!(
        "d_pm_x1e4 / d_n = {:.2} / {:.2}",
        report.d_pm_scaled(),
        report.d_n_mean_degrees
    );
    if let Some(path) = &args.json {
        let json = serde_json::to_vec_pretty(&report)?;
        write_file(path, &json)?;
    }
    Ok(())
}

fn describe(name: &str, net: &StoredMlp) {
    let a = net.architecture();
    println!(
        "{name}: input {} hidden {}x{} output {} levels {} params {} payload_bytes {}",
        a.input_dim,
        a.hidden_layers,
        a.hidden_width,
        a.output_dim,
        a.positional_levels,
        a.param_count(),
        net.payload_bytes()
    );
}

fn cmd_info(args: &InfoArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    describe("q_c", model.coarse());
    describe("q_f", model.fine());
    println!(
        "quantized: {}",
        if model.is_quantized() { "yes (fp16)" } else { "no" }
    );
    let s = model.smoothing();
    println!("smoothing: {} iterations, lambda {}", s.iterations, s.lambda);
    let n = model.normalization();
    println!(
        "normalization: scale {} offset [{}, {}, {}]",
        n.scale, n.offset.x, n.offset.y, n.offset.z
    );
    println!("file_bytes = {}", model.byte_len());
    Ok(())
}
