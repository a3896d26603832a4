use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{wire, Endpoint, Envelope, TransportError};

/// What happens to frames on one directed link.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LinkRule {
    #[default]
    Deliver,
    Drop,
    /// Every frame arrives after the same delay, so order is kept.
    Delay(Duration),
    /// Every frame gets an independent random delay in `[0, max_delay]`
    /// drawn from the fabric's seeded generator, so frames may overtake.
    Reorder {
        max_delay: Duration,
    },
}

/// Registration token and inbox for one endpoint name.
type Slot = (u64, Sender<Vec<u8>>);

struct Inner {
    nodes: Mutex<HashMap<String, Slot>>,
    /// Shared counter for endpoint tokens and timer sequence numbers.
    next_token: Mutex<u64>,
    rules: Mutex<HashMap<(String, String), LinkRule>>,
    rng: Mutex<ChaCha8Rng>,
    timer: Sender<Scheduled>,
}

struct Scheduled {
    due: Instant,
    seq: u64,
    to: Sender<Vec<u8>>,
    frame: Vec<u8>,
}

/// Deterministic in-memory network. Frames really are encoded and decoded,
/// so the fabric exercises the same codec as TCP.
#[derive(Clone)]
pub struct InProcessFabric {
    inner: Arc<Inner>,
}

impl InProcessFabric {
    pub fn new(seed: u64) -> Self {
        let (timer, rx) = unbounded();
        thread::Builder::new()
            .name("fabric-timer".into())
            .spawn(move || run_timer(rx))
            .expect("spawn fabric timer");
        InProcessFabric {
            inner: Arc::new(Inner {
                nodes: Mutex::new(HashMap::new()),
                next_token: Mutex::new(0),
                rules: Mutex::new(HashMap::new()),
                rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
                timer,
            }),
        }
    }

    /// Registers a node. Re-using a live name replaces the old inbox.
    pub fn endpoint(&self, name: &str) -> FabricEndpoint {
        let (tx, rx) = unbounded();
        let token = {
            let mut t = self.inner.next_token.lock();
            *t += 1;
            *t
        };
        self.inner.nodes.lock().insert(name.to_string(), (token, tx));
        FabricEndpoint {
            name: name.to_string(),
            token,
            inner: Arc::clone(&self.inner),
            inbox: rx,
        }
    }

    pub fn set_rule(&self, from: &str, to: &str, rule: LinkRule) {
        self.inner.rules.lock().insert((from.to_string(), to.to_string()), rule);
    }

    pub fn clear_rules(&self) {
        self.inner.rules.lock().clear();
    }
}

fn run_timer(rx: Receiver<Scheduled>) {
    let mut heap: BinaryHeap<Reverse<(Instant, u64)>> = BinaryHeap::new();
    let mut waiting: HashMap<u64, Scheduled> = HashMap::new();
    loop {
        let now = Instant::now();
        while let Some(Reverse((due, seq))) = heap.peek().copied() {
            if due > now {
                break;
            }
            heap.pop();
            if let Some(s) = waiting.remove(&seq) {
                let _ = s.to.send(s.frame);
            }
        }
        let next = match heap.peek() {
            Some(Reverse((due, _))) => rx.recv_timeout(due.saturating_duration_since(now)),
            None => rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        match next {
            Ok(s) => {
                heap.push(Reverse((s.due, s.seq)));
                waiting.insert(s.seq, s);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => return,
        }
    }
}

pub struct FabricEndpoint {
    name: String,
    token: u64,
    inner: Arc<Inner>,
    inbox: Receiver<Vec<u8>>,
}

impl Endpoint for FabricEndpoint {
    fn name(&self) -> &str {
        &self.name
    }

    fn send(&self, to: &str, env: &Envelope) -> Result<(), TransportError> {
        let frame = wire::encode(env)?;
        let target = self
            .inner
            .nodes
            .lock()
            .get(to)
            .map(|(_, tx)| tx.clone())
            .ok_or_else(|| TransportError::UnknownNode(to.to_string()))?;
        let rule = self
            .inner
            .rules
            .lock()
            .get(&(self.name.clone(), to.to_string()))
            .copied()
            .unwrap_or_default();
        let delay = match rule {
            LinkRule::Deliver => {
                let _ = target.send(frame);
                return Ok(());
            }
            LinkRule::Drop => return Ok(()),
            LinkRule::Delay(d) => d,
            LinkRule::Reorder { max_delay } => {
                let nanos = max_delay.as_nanos().min(u64::MAX as u128) as u64;
                Duration::from_nanos(self.inner.rng.lock().gen_range(0..=nanos))
            }
        };
        let seq = {
            let mut t = self.inner.next_token.lock();
            *t += 1;
            *t
        };
        let _ = self.inner.timer.send(Scheduled {
            due: Instant::now() + delay,
            seq,
            to: target,
            frame,
        });
        Ok(())
    }

    fn recv_timeout(&self, timeout: Duration) -> Result<Option<Envelope>, TransportError> {
        match self.inbox.recv_timeout(timeout) {
            Ok(frame) => Ok(Some(wire::decode(&frame)?)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

impl Drop for FabricEndpoint {
    fn drop(&mut self) {
        let mut nodes = self.inner.nodes.lock();
        // a later registration under the same name owns the entry now
        if nodes.get(&self.name).is_some_and(|(token, _)| *token == self.token) {
            nodes.remove(&self.name);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::Message;

    fn ping(n: u64, from: &str) -> Envelope {
        Envelope {
            message_id: n,
            correlation_id: 0,
            sender: from.into(),
            payload: Message::QueryAck { query_id: n },
        }
    }

    fn drain(ep: &FabricEndpoint, n: usize) -> Vec<u64> {
        (0..n)
            .filter_map(|_| ep.recv_timeout(Duration::from_secs(2)).unwrap())
            .map(|e| e.message_id)
            .collect()
    }

    #[test]
    fn ping_pong_in_order() {
        let f = InProcessFabric::new(1);
        let a = f.endpoint("a");
        let b = f.endpoint("b");
        for i in 0..1000 {
            a.send("b", &ping(i, "a")).unwrap();
            let got = b.recv_timeout(Duration::from_secs(1)).unwrap().unwrap();
            assert_eq!(got.message_id, i);
            b.send(&got.sender, &ping(i, "b")).unwrap();
            assert_eq!(a.recv_timeout(Duration::from_secs(1)).unwrap().unwrap().message_id, i);
        }
    }

    #[test]
    fn unknown_node_and_drop_rule() {
        let f = InProcessFabric::new(1);
        let a = f.endpoint("a");
        let b = f.endpoint("b");
        assert_eq!(
            a.send("zz", &ping(0, "a")),
            Err(TransportError::UnknownNode("zz".into()))
        );
        f.set_rule("a", "b", LinkRule::Drop);
        a.send("b", &ping(1, "a")).unwrap();
        assert_eq!(b.recv_timeout(Duration::from_millis(50)).unwrap(), None);
        f.clear_rules();
        a.send("b", &ping(2, "a")).unwrap();
        assert_eq!(drain(&b, 1), vec![2]);
        drop(b);
        assert!(a.send("b", &ping(3, "a")).is_err());
    }

    #[test]
    fn delay_keeps_order_and_reorder_shuffles() {
        let f = InProcessFabric::new(7);
        let a = f.endpoint("a");
        let b = f.endpoint("b");
        f.set_rule("a", "b", LinkRule::Delay(Duration::from_millis(20)));
        let start = Instant::now();
        for i in 0..50 {
            a.send("b", &ping(i, "a")).unwrap();
        }
        assert_eq!(drain(&b, 50), (0..50).collect::<Vec<_>>());
        assert!(start.elapsed() >= Duration::from_millis(20));

        f.set_rule(
            "a",
            "b",
            LinkRule::Reorder {
                max_delay: Duration::from_millis(30),
            },
        );
        for i in 0..50 {
            a.send("b", &ping(i, "a")).unwrap();
        }
        let got = drain(&b, 50);
        let mut sorted = got.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(got, sorted);
    }
}
