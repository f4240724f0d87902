#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ccprobe::pipeline::RunConfig;
use ccprobe::synthetic::{generate, write_world, SyntheticPaths, SyntheticSpec, SyntheticWorld};

pub struct World {
    pub world: SyntheticWorld,
    pub paths: SyntheticPaths,
}

pub fn synth(dir: &Path, spec: &SyntheticSpec) -> World {
    let world = generate(spec);
    let paths = write_world(&world, dir).expect("write synthetic world");
    World { world, paths }
}

/// Config text for a mock run over `paths`; `extra` is appended verbatim.
pub fn config_text(paths: &SyntheticPaths, out: &Path, extra: &str) -> String {
    format!(
        r#"output_dir = "{out}"

[data]
dump = "{dump}"
dataset = "{dataset}"
word_list = "{words}"
frequency_list = "{freq}"

[report]
concept_min_count = 3
{extra}
"#,
        out = out.display(),
        dump = paths.dump.display(),
        dataset = paths.dataset.display(),
        words = paths.word_list.display(),
        freq = paths.frequency_list.display(),
    )
}

pub fn config(paths: &SyntheticPaths, out: &Path, seed: u64, extra: &str) -> RunConfig {
    let mut cfg = RunConfig::from_toml_str(&config_text(paths, out, extra), Path::new("/")).expect("valid config");
    cfg.seed = Some(seed);
    cfg
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub mod fake_scorer {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::sync::{Arc, Mutex};
    use std::thread;

    use serde_json::Value;

    /// Maps a request body to a status code and response body.
    pub type Handler = Box<dyn Fn(usize, &Value) -> (u16, String) + Send + Sync>;

    /// A one-route HTTP server on an ephemeral port, one connection per
    /// request. Requests are recorded in arrival order.
    pub struct FakeScorer {
        pub endpoint: String,
        pub requests: Arc<Mutex<Vec<(String, Value)>>>,
    }

    impl FakeScorer {
        pub fn start(handler: Handler) -> FakeScorer {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let endpoint = format!("http://{}", listener.local_addr().unwrap());
            let requests = Arc::new(Mutex::new(Vec::new()));
            let log = Arc::clone(&requests);
            let handler = Arc::new(handler);
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { continue };
                    let log = Arc::clone(&log);
                    let handler = Arc::clone(&handler);
                    thread::spawn(move || serve(stream, &log, &handler));
                }
            });
            FakeScorer { endpoint, requests }
        }

        pub fn count(&self) -> usize {
            self.requests.lock().unwrap().len()
        }
    }

    fn serve(stream: TcpStream, log: &Mutex<Vec<(String, Value)>>, handler: &Handler) {
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    length = v.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        let value: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        let path = request_line.split_whitespace().nth(1).unwrap_or("").to_owned();
        let index = {
            let mut log = log.lock().unwrap();
            log.push((path, value.clone()));
            log.len() - 1
        };
        let (status, text) = handler(index, &value);
        let mut out = stream;
        let _ = write!(
            out,
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
            text.len()
        );
        let _ = out.flush();
    }

    pub type ScoreFn = dyn Fn(&str, &str) -> f64;

    /// A well-formed response that scores continuation `j` of item `i` as
    /// `-(i + j / 10)`, or with `score` when given.
    pub fn respond(request: &Value, score: Option<&ScoreFn>) -> String {
        let model = request["model"].clone();
        let results: Vec<Value> = request["items"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let prompt = item["prompt"].as_str().unwrap();
                let logprobs: Vec<f64> = item["continuations"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .enumerate()
                    .map(|(j, c)| match score {
                        Some(f) => f(prompt, c.as_str().unwrap()),
                        None => -(i as f64 + j as f64 / 10.0),
                    })
                    .collect();
                serde_json::json!({ "logprobs": logprobs })
            })
            .collect();
        serde_json::json!({ "results": results, "model": model, "usage": { "items": results.len() } }).to_string()
    }
}
