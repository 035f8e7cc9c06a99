//! The service and its clients: `serve`, `predict` and `chat`.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use biae_client::Client;
use biae_core::checkpoint::Checkpoint;
use biae_core::config::AppConfig;
use biae_core::corpus::{Split, TurnAnswer};
use biae_core::dialogue::{CreateSession, SessionState, SessionStatus};
use biae_core::pipeline::Predictor;
use biae_core::wire::PredictRequest;
use tokio::net::TcpListener;

use crate::{ChatArgs, PredictArgs, ServeArgs};

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting the async runtime")
}

pub fn predict(config: &AppConfig, args: PredictArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.json).with_context(|| format!("reading {}", args.json.display()))?;
    let request: PredictRequest =
        serde_json::from_str(&text).with_context(|| format!("{} is not a prediction request", args.json.display()))?;
    let prediction = match args.server {
        Some(base) => {
            let client = Client::new(&base)?;
            runtime()?.block_on(client.predict(&request))?
        }
        None => {
            let path = args.checkpoint.unwrap_or_else(|| config.checkpoint.clone());
            let ckpt = Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
            let generator = biae_server::build_generator(&config.serve, Some(config.split_path(Split::Train)))?;
            Predictor::from_checkpoint_with(&ckpt, generator)?.predict(
                &request.document,
                &request.question,
                &request.scenario,
                &request.history,
            )?
        }
    };
    println!("{}", serde_json::to_string_pretty(&prediction)?);
    Ok(())
}

pub fn serve(config: &mut AppConfig, args: ServeArgs) -> Result<()> {
    let s = &mut config.serve;
    if let Some(v) = args.host {
        s.host = v;
    }
    if let Some(v) = args.port {
        s.port = v;
    }
    if let Some(v) = args.turn_cap {
        if v == 0 {
            bail!("--turn-cap must be positive");
        }
        s.turn_cap = v;
    }
    if args.session_dir.is_some() {
        s.session_dir = args.session_dir;
    }
    if let Some(v) = args.generator {
        s.generator = v;
    }
    let checkpoint = args.checkpoint.unwrap_or_else(|| config.checkpoint.clone());
    let state = biae_server::load_state(&checkpoint, &config.serve, Some(config.split_path(Split::Train)))
        .with_context(|| format!("loading the model from {}", checkpoint.display()))?;
    let addr = format!("{}:{}", config.serve.host, config.serve.port);
    runtime()?.block_on(async move {
        let listener = TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        let bound = listener.local_addr()?;
        println!("listening on http://{bound}");
        io::stdout().flush()?;
        tracing::info!(%bound, "serving");
        biae_server::serve(listener, Arc::new(state)).await?;
        Ok(())
    })
}

struct Prompter<R> {
    input: R,
}

impl<R: BufRead> Prompter<R> {
    /// One trimmed line; `None` at end of input.
    fn line(&mut self, prompt: &str) -> Result<Option<String>> {
        print!("{prompt}");
        io::stdout().flush()?;
        let mut buf = String::new();
        if self.input.read_line(&mut buf)? == 0 {
            return Ok(None);
        }
        Ok(Some(buf.trim().to_string()))
    }

    fn required(&mut self, prompt: &str) -> Result<String> {
        loop {
            match self.line(prompt)? {
                None => bail!("input ended"),
                Some(s) if s.is_empty() => continue,
                Some(s) => return Ok(s),
            }
        }
    }

    /// Lines up to the first empty one.
    fn block(&mut self, prompt: &str) -> Result<String> {
        println!("{prompt}");
        let mut lines = Vec::new();
        while let Some(l) = self.line("")? {
            if l.is_empty() {
                break;
            }
            lines.push(l);
        }
        if lines.is_empty() {
            bail!("the document is empty");
        }
        Ok(lines.join("\n"))
    }
}

fn describe(state: &SessionState) -> String {
    let decision = state.decision.map_or("none", |d| d.as_str());
    let reason = state
        .close_reason
        .and_then(|r| serde_json::to_value(r).ok())
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    format!("decision: {decision} ({reason}, {} predictions)", state.predictions)
}

pub fn chat(args: ChatArgs) -> Result<()> {
    let client = Client::new(&args.server)?;
    let rt = runtime()?;
    let health = rt
        .block_on(client.health())
        .with_context(|| format!("no service at {}", client.base()))?;
    eprintln!("connected to {} (model {}, turn cap {})", client.base(), &health.model.config_hash[..12.min(health.model.config_hash.len())], health.model.turn_cap);

    let mut p = Prompter { input: io::stdin().lock() };
    let document = match args.document {
        Some(path) => std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?,
        None => p.block("rule document (end with an empty line):")?,
    };
    let question = match args.question {
        Some(q) => q,
        None => p.required("question: ")?,
    };
    let scenario = match args.scenario {
        Some(s) => s,
        None => p.line("scenario (optional): ")?.unwrap_or_default(),
    };

    let mut state = rt.block_on(client.create_session(&CreateSession { document, question, scenario }))?;
    while state.status == SessionStatus::AwaitingAnswer {
        let asked = state.pending_question.clone().unwrap_or_default();
        let answer = loop {
            let Some(line) = p.line(&format!("{asked} [yes/no] "))? else {
                bail!("input ended with session {} still open", state.session_id);
            };
            match line.parse::<TurnAnswer>() {
                Ok(a) => break a,
                Err(e) => eprintln!("{e}"),
            }
        };
        state = rt.block_on(client.answer(&state.session_id, answer))?;
    }
    println!("{}", describe(&state));
    Ok(())
}
