//! Workers as threads of one process, connected by shared inboxes.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Body, Message, Transport, WorkerId};
use crate::error::TransportError;

/// Delivery order across senders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheduler {
    /// Global arrival order.
    Fifo,
    /// At every receive, a random sender with pending messages is chosen;
    /// its oldest message is delivered.
    Adversarial(u64),
}

struct InboxState {
    /// Pending messages per sender.
    queues: Vec<VecDeque<Message>>,
    /// Senders in arrival order of their messages (Fifo mode).
    arrivals: VecDeque<WorkerId>,
    pending: usize,
    rng: Option<ChaCha8Rng>,
}

struct Inbox {
    state: Mutex<InboxState>,
    ready: Condvar,
}

struct Shared {
    inboxes: Vec<Inbox>,
    aborted: AtomicBool,
}

/// Constructor for a set of connected in-process endpoints.
pub struct InProcNetwork;

impl InProcNetwork {
    pub fn endpoints(workers: u32, scheduler: Scheduler) -> Vec<InProcEndpoint> {
        assert!(workers >= 1, "need at least one worker");
        let inboxes = (0..workers)
                .map(|i| Inbox {
                    state: Mutex::new(InboxState {
                        queues: (0..workers).map(|_| VecDeque::new()).collect(),
                        arrivals: VecDeque::new(),
                        pending: 0,
                        rng: match scheduler {
                            Scheduler::Fifo => None,
                            Scheduler::Adversarial(seed) => Some(ChaCha8Rng::seed_from_u64(
                                seed ^ (u64::from(i) << 32 | 0x9e37),
                            )),
                        },
                    }),
                    ready: Condvar::new(),
                })
                .collect();
        let shared = Arc::new(Shared {
            inboxes,
            aborted: AtomicBool::new(false),
        });
        (0..workers)
            .map(|id| InProcEndpoint {
                id,
                shared: Arc::clone(&shared),
            })
            .collect()
    }
}

pub struct InProcEndpoint {
    id: WorkerId,
    shared: Arc<Shared>,
}

impl Transport for InProcEndpoint {
    fn id(&self) -> WorkerId {
        self.id
    }

    fn workers(&self) -> u32 {
        self.shared.inboxes.len() as u32
    }

    fn send(&self, to: WorkerId, body: Body) -> Result<(), TransportError> {
        let inbox = self
            .shared
            .inboxes
            .get(to as usize)
            .ok_or_else(|| TransportError::Frame(format!("no worker {to}")))?;
        let mut state = inbox.state.lock().expect("inbox poisoned");
        state.queues[self.id as usize].push_back(Message {
            from: self.id,
            to,
            body,
        });
        if state.rng.is_none() {
            state.arrivals.push_back(self.id);
        }
        state.pending += 1;
        drop(state);
        inbox.ready.notify_one();
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let inbox = &self.shared.inboxes[self.id as usize];
        let mut state = inbox.state.lock().expect("inbox poisoned");
        while state.pending == 0 {
            if self.shared.aborted.load(Ordering::Acquire) {
                return Err(TransportError::Closed);
            }
            state = inbox.ready.wait(state).expect("inbox poisoned");
        }
        let sender = if state.rng.is_none() {
            state.arrivals.pop_front().expect("arrival recorded")
        } else {
            let nonempty = state.queues.iter().filter(|q| !q.is_empty()).count();
            let pick = state.rng.as_mut().expect("seeded").random_range(0..nonempty);
            state
                .queues
                .iter()
                .enumerate()
                .filter(|(_, q)| !q.is_empty())
                .nth(pick)
                .map(|(i, _)| i as WorkerId)
                .expect("pending message")
        };
        state.pending -= 1;
        Ok(state.queues[sender as usize]
            .pop_front()
            .expect("sender queue nonempty"))
    }

    fn abort(&self) {
        self.shared.aborted.store(true, Ordering::Release);
        for inbox in &self.shared.inboxes {
            let _state = inbox.state.lock().expect("inbox poisoned");
            inbox.ready.notify_all();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    #[test]
    fn self_send_is_delivered() {
        let mut eps = InProcNetwork::endpoints(1, Scheduler::Fifo);
        eps[0].send(0, Body::Ack).unwrap();
        assert_eq!(eps[0].recv().unwrap().body, Body::Ack);
    }

    #[test]
    fn abort_wakes_blocked_receivers() {
        let mut eps = InProcNetwork::endpoints(2, Scheduler::Fifo);
        let mut blocked = eps.pop().unwrap();
        let waiter = thread::spawn(move || blocked.recv());
        thread::sleep(std::time::Duration::from_millis(20));
        eps[0].abort();
        assert!(matches!(waiter.join().unwrap(), Err(TransportError::Closed)));
    }

    #[test]
    fn pairwise_fifo_under_adversarial_scheduling() {
        for seed in 0..20 {
            let workers = 4u32;
            let mut eps = InProcNetwork::endpoints(workers, Scheduler::Adversarial(seed));
            let mut receiver = eps.remove(0);
            let handles: Vec<_> = eps
                .into_iter()
                .map(|ep| {
                    thread::spawn(move || {
                        for i in 0..200 {
                            ep.send(0, Body::InEdge { state: i }).unwrap();
                        }
                    })
                })
                .collect();
            let mut next = vec![0u32; workers as usize];
            for _ in 0..200 * (workers - 1) {
                let msg = receiver.recv().unwrap();
                let Body::InEdge { state } = msg.body else {
                    panic!()
                };
                assert_eq!(state, next[msg.from as usize], "FIFO broken");
                next[msg.from as usize] += 1;
            }
            for h in handles {
                h.join().unwrap();
            }
        }
    }

    #[test]
    fn adversary_reorders_across_senders() {
        // with all messages already queued the choice is up to the scheduler
        let orders: Vec<Vec<u32>> = (0..8)
            .map(|seed| {
                let mut eps = InProcNetwork::endpoints(3, Scheduler::Adversarial(seed));
                for from in [1, 2] {
                    for _ in 0..5 {
                        eps[from].send(0, Body::Ack).unwrap();
                    }
                }
                (0..10).map(|_| eps[0].recv().unwrap().from).collect()
            })
            .collect();
        assert!(orders.iter().any(|o| o != &orders[0]));
    }
}
