#![allow(dead_code)]

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use flowplan::dialogue::Turn;
use flowplan::harness::{Agent, AgentRequest, PlanFollower};
use flowplan::metrics::{GoldTarget, PredictionRecord};
use flowplan::parse::{parse_prediction, ExpectedKind};
use flowplan::prompt::PromptConfig;

/// A scored record for `gold` (an agent or action turn) answered with `raw`.
pub fn record(dialogue: &str, turn_index: usize, flow: &str, gold: &Turn, raw: &str) -> PredictionRecord {
    let expected_kind = ExpectedKind::of(gold).expect("agent or action turn");
    let gold = match gold {
        Turn::Action(call) => GoldTarget::Action(call.clone()),
        Turn::Agent { text } => GoldTarget::Utterance { text: text.clone() },
        Turn::Customer { .. } => unreachable!(),
    };
    PredictionRecord {
        dialogue_id: dialogue.to_string(),
        turn_index,
        ordinal: turn_index,
        expected_kind,
        gold_flow: flow.to_string(),
        gold,
        raw_output: raw.to_string(),
        predicted: parse_prediction(raw, expected_kind, &PromptConfig::BASE),
    }
}

/// Local stand-in for a model service speaking the `{"context"}` ->
/// `{"output"}` protocol. Answers like the plan follower, or with an
/// acknowledgement when the context has no plan.
pub struct MockServer {
    pub url: String,
    server: Arc<tiny_http::Server>,
    workers: Vec<thread::JoinHandle<()>>,
}

#[derive(Clone, Copy)]
pub enum Behaviour {
    PlanFollower,
    Delay(Duration),
    Garbage,
    Status(u16),
}

impl MockServer {
    pub fn start(behaviour: Behaviour, workers: usize) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock server"));
        let url = format!("http://{}/generate", server.server_addr().to_ip().unwrap());
        let workers = (0..workers)
            .map(|_| {
                let server = Arc::clone(&server);
                thread::spawn(move || {
                    while let Ok(mut req) = server.recv() {
                        let mut body = String::new();
                        req.as_reader().read_to_string(&mut body).unwrap();
                        let response = match behaviour {
                            Behaviour::PlanFollower => {
                                let v: serde_json::Value = serde_json::from_str(&body).unwrap();
                                let context = v["context"].as_str().unwrap_or_default();
                                let request =
                                    AgentRequest { context, expected_kind: ExpectedKind::Action, gold_target: "" };
                                let output = PlanFollower::new(0)
                                    .respond(&request)
                                    .unwrap_or_else(|_| "agent: Okay, one moment please.".into());
                                tiny_http::Response::from_string(serde_json::json!({ "output": output }).to_string())
                            }
                            Behaviour::Delay(d) => {
                                thread::sleep(d);
                                tiny_http::Response::from_string(r#"{"output": "agent: late"}"#)
                            }
                            Behaviour::Garbage => tiny_http::Response::from_string("not json"),
                            Behaviour::Status(code) => tiny_http::Response::from_string("").with_status_code(code),
                        };
                        let _ = req.respond(response);
                    }
                })
            })
            .collect();
        Self { url, server, workers }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        for _ in 1..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
