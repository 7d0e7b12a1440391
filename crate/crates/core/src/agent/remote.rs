//! Chat-completion planner client.
//!
//! Request body: `{model, temperature: 0, messages, tools: [{name, description, parameters}]}`.
//! Accepted replies are either this crate's native shape
//! (`{"tool_calls": [{"tool", "arguments"}], "text"}` or `{"tool_call": {...}}`)
//! or an OpenAI-style `choices[0].message` with `tool_calls[].function`.
//! Environment: `EDGEAI_PLANNER_URL`, `EDGEAI_PLANNER_API_KEY`, `EDGEAI_PLANNER_MODEL`.

use std::time::Duration;

use serde_json::{json, Value};

use super::catalog::ToolCatalog;
use super::planner::{Planner, PlannerContext, PlannerDecision, PlannerError, ToolCall};

pub const ENV_URL: &str = "EDGEAI_PLANNER_URL";
pub const ENV_API_KEY: &str = "EDGEAI_PLANNER_API_KEY";
pub const ENV_MODEL: &str = "EDGEAI_PLANNER_MODEL";
pub const MAX_RETRIES: u32 = 2;
const DEFAULT_MODEL: &str = "planner";

const SYSTEM_PROMPT: &str = "You provision edge AI services over an O-RAN deployment. \
Reply with tool calls drawn only from the listed tools, or with text when you need the user. \
The user message is the session context as JSON.";

pub struct RemotePlanner {
    url: String,
    api_key: Option<String>,
    model: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemotePlanner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemotePlanner")
            .field("url", &self.url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl RemotePlanner {
    pub fn new(url: impl Into<String>, api_key: Option<String>, model: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            api_key,
            model: model.unwrap_or_else(|| DEFAULT_MODEL.to_string()),
            agent,
        }
    }

    /// `None` when no endpoint is configured.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        let url = std::env::var(ENV_URL).ok().filter(|u| !u.is_empty())?;
        Some(Self::new(
            url,
            std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty()),
            std::env::var(ENV_MODEL).ok().filter(|m| !m.is_empty()),
            timeout,
        ))
    }

    pub fn request_body(&self, ctx: &PlannerContext) -> Value {
        let cat = ToolCatalog::builtin();
        let tools: Vec<Value> = cat
            .allowed(ctx.stage)
            .into_iter()
            .map(|t| json!({ "name": t.name, "description": t.description, "parameters": t.parameters }))
            .collect();
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                { "role": "system", "content": SYSTEM_PROMPT },
                { "role": "user", "content": serde_json::to_string(ctx).expect("context serializes") },
            ],
            "tools": tools,
        })
    }

    fn post(&self, body: &Value) -> Result<(u16, String), PlannerError> {
        let mut req = self.agent.post(&self.url);
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| PlannerError::RemoteUnreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| PlannerError::RemoteUnreachable(e.to_string()))?;
        Ok((status, text))
    }
}

fn parse_call(v: &Value) -> Option<ToolCall> {
    if let Some(f) = v.get("function") {
        let name = f.get("name")?.as_str()?;
        let args = match f.get("arguments") {
            Some(Value::String(s)) => serde_json::from_str(s).ok()?,
            Some(a @ Value::Object(_)) => a.clone(),
            None => json!({}),
            _ => return None,
        };
        return Some(ToolCall::new(name, args));
    }
    let name = v.get("tool").or_else(|| v.get("name"))?.as_str()?;
    let args = v.get("arguments").cloned().unwrap_or_else(|| json!({}));
    args.is_object().then(|| ToolCall::new(name, args))
}

/// Parse one reply body into a decision.
pub fn parse_reply(body: &str) -> Result<PlannerDecision, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("not JSON: {e}"))?;
    let msg = match v.get("choices").and_then(|c| c.get(0)) {
        Some(choice) => choice.get("message").ok_or("choice without message")?.clone(),
        None => v,
    };
    let text = msg
        .get("text")
        .or_else(|| msg.get("content"))
        .and_then(Value::as_str)
        .filter(|t| !t.is_empty())
        .map(String::from);
    let mut calls = Vec::new();
    if let Some(c) = msg.get("tool_call").filter(|c| !c.is_null()) {
        calls.push(parse_call(c).ok_or("unreadable tool_call")?);
    }
    if let Some(list) = msg.get("tool_calls").filter(|c| !c.is_null()) {
        for c in list.as_array().ok_or("tool_calls is not a list")? {
            calls.push(parse_call(c).ok_or("unreadable entry in tool_calls")?);
        }
    }
    if calls.is_empty() && text.is_none() {
        return Err("reply carries neither tool calls nor text".into());
    }
    Ok(PlannerDecision {
        tool_calls: calls,
        text,
        retries: 0,
    })
}

impl Planner for RemotePlanner {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn decide(&self, ctx: &PlannerContext) -> Result<PlannerDecision, PlannerError> {
        let body = self.request_body(ctx);
        let mut last = String::new();
        for attempt in 0..=MAX_RETRIES {
            let (status, text) = self.post(&body)?;
            if !(200..300).contains(&status) {
                return Err(PlannerError::RemoteUnreachable(format!("HTTP {status}")));
            }
            match parse_reply(&text) {
                Ok(mut d) => {
                    d.retries = attempt;
                    return Ok(d);
                }
                Err(e) => last = e,
            }
        }
        Err(PlannerError::MalformedReply {
            attempts: MAX_RETRIES + 1,
            detail: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_shapes() {
        let d = parse_reply(r#"{"tool_call": {"tool": "search_models", "arguments": {"task_tag": "x", "limit": 2}}}"#).unwrap();
        assert_eq!(d.tool_calls[0].tool, "search_models");
        let d = parse_reply(
            r#"{"choices":[{"message":{"content":null,"tool_calls":[{"function":{"name":"list_ues","arguments":"{\"cell_ids\":[\"cell-1\"]}"}}]}}]}"#,
        )
        .unwrap();
        assert_eq!(d.tool_calls[0].arguments["cell_ids"][0], "cell-1");
        assert_eq!(parse_reply(r#"{"text": "hello"}"#).unwrap().text.as_deref(), Some("hello"));
        assert!(parse_reply("not json").is_err());
        assert!(parse_reply("{}").is_err());
        assert!(parse_reply(r#"{"tool_call": {"tool": "x", "arguments": 3}}"#).is_err());
    }

    #[test]
    fn unreachable() {
        let p = RemotePlanner::new("http://127.0.0.1:9/plan", None, None, Duration::from_millis(300));
        let ctx: PlannerContext = serde_json::from_value(json!({
            "session_id": "s", "stage": "INTENT", "stage_step": 0,
            "profile": super::super::UseCaseProfile::new("x"),
            "user_message": null, "searched_model_ids": [], "candidate_ids": [],
            "chosen_model_id": null, "plan": null, "service_instance_id": null,
            "service_node_id": null, "qos_policy_id": null, "steering_policy_id": null,
            "target_ue_ids": [], "node_ids": [], "last_results": [], "tools": []
        }))
        .unwrap();
        assert!(matches!(p.decide(&ctx), Err(PlannerError::RemoteUnreachable(_))));
    }
}
