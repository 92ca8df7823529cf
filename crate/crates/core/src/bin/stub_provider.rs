// Conformance stub for provider protocol v1, used by the integration tests.
//
// usage: todflow-stub-provider [--candidates JSON] [--echo] [--exit-after N]
//                              [--sleep-ms MS] [--bad-json] [--wrong-id] [--error MSG]
//
// --candidates  fixed candidate list returned for every request
// --echo        one candidate whose acts are the request's completion labels
// --exit-after  exit with status 3 after reading request number N (0-based),
//               without replying

use std::io::{self, BufRead, Write};
use std::time::Duration;

use serde_json::{json, Value};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut fixed: Option<Value> = None;
    let mut echo = false;
    let mut exit_after: Option<u64> = None;
    let mut sleep_ms = 0u64;
    let mut bad_json = false;
    let mut wrong_id = false;
    let mut error: Option<String> = None;

    let mut it = args.iter();
    while let Some(a) = it.next() {
        let mut value = || it.next().cloned().unwrap_or_else(|| usage(a));
        match a.as_str() {
            "--candidates" => fixed = Some(serde_json::from_str(&value()).unwrap_or_else(|_| usage(a))),
            "--echo" => echo = true,
            "--exit-after" => exit_after = Some(value().parse().unwrap_or_else(|_| usage(a))),
            "--sleep-ms" => sleep_ms = value().parse().unwrap_or_else(|_| usage(a)),
            "--bad-json" => bad_json = true,
            "--wrong-id" => wrong_id = true,
            "--error" => error = Some(value()),
            _ => usage(a),
        }
    }

    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for (n, line) in stdin.lock().lines().enumerate() {
        let Ok(line) = line else { break };
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("stub: unreadable request: {e}");
                std::process::exit(4);
            }
        };
        if exit_after == Some(n as u64) {
            eprintln!("stub: exiting on request {n} as instructed");
            std::process::exit(3);
        }
        if sleep_ms > 0 {
            std::thread::sleep(Duration::from_millis(sleep_ms));
        }
        let id = req["id"].as_u64().unwrap_or(0);
        let reply = if bad_json {
            "{not json".to_string()
        } else {
            let candidates = if echo {
                json!([{ "acts": req["completion"].clone(), "text": "echo" }])
            } else {
                fixed.clone().unwrap_or_else(|| json!([]))
            };
            let mut r = json!({
                "v": 1,
                "id": if wrong_id { id + 1 } else { id },
                "candidates": candidates,
            });
            if let Some(msg) = &error {
                r["error"] = json!(msg);
                r["candidates"] = json!([]);
            }
            r.to_string()
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}

fn usage(flag: &str) -> ! {
    eprintln!("stub: bad argument near `{flag}`");
    std::process::exit(2);
}
