//! Network front end for the provisioning agent.
//!
//! [`Gateway`] owns the orchestrator behind one lock. Every mutation goes
//! through [`Gateway::with`], which drains the events it produced into the
//! stream [`hub::Hub`] and routes indications for external xApps to their E2
//! connections before the lock is released, so subscribers see events in
//! exactly the order they were raised.

pub mod api;
pub mod cli;
pub mod e2;
pub mod hub;

use std::collections::BTreeMap;
use std::sync::Mutex;

use edgeai_core::agent::Orchestrator;
use edgeai_core::ric::wire::E2Message;
use tokio::sync::mpsc;

use hub::Hub;

pub struct Gateway {
    orch: Mutex<Orchestrator>,
    hub: Hub,
    e2_routes: Mutex<BTreeMap<String, mpsc::UnboundedSender<E2Message>>>,
    stream_subs: Mutex<BTreeMap<String, Vec<u64>>>,
}

impl Gateway {
    pub fn new(orch: Orchestrator) -> Self {
        Self {
            orch: Mutex::new(orch),
            hub: Hub::default(),
            e2_routes: Mutex::new(BTreeMap::new()),
            stream_subs: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn hub(&self) -> &Hub {
        &self.hub
    }

    /// Run `f` with exclusive access, then publish what it produced.
    pub fn with<R>(&self, f: impl FnOnce(&mut Orchestrator) -> R) -> R {
        let mut orch = self.orch.lock().unwrap_or_else(|e| e.into_inner());
        let out = f(&mut orch);
        self.hub.publish(orch.drain_events());
        let external = orch.world_mut().drain_external();
        if !external.is_empty() {
            let mut routes = self.e2_routes.lock().unwrap_or_else(|e| e.into_inner());
            for ind in external {
                let dead = routes
                    .get(&ind.sub_id)
                    .is_some_and(|tx| tx.send(E2Message::Indication(ind.clone())).is_err());
                if dead {
                    routes.remove(&ind.sub_id);
                    let _ = orch.world_mut().unsubscribe(&ind.sub_id);
                }
            }
        }
        out
    }

    pub(crate) fn route(&self, sub_id: String, tx: mpsc::UnboundedSender<E2Message>) {
        self.e2_routes.lock().unwrap_or_else(|e| e.into_inner()).insert(sub_id, tx);
    }

    pub(crate) fn drop_routes(&self, sub_ids: &[String]) {
        let mut routes = self.e2_routes.lock().unwrap_or_else(|e| e.into_inner());
        for s in sub_ids {
            routes.remove(s);
        }
    }

    /// Record that stream subscriber `sub` follows `session_id`.
    pub fn attach_subscriber(&self, session_id: &str, sub: u64) {
        self.stream_subs
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(session_id.to_string())
            .or_default()
            .push(sub);
    }

    pub fn subscribers_of(&self, session_id: &str) -> Vec<u64> {
        self.stream_subs
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(session_id)
            .cloned()
            .unwrap_or_default()
    }
}
