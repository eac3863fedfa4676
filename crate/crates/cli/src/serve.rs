//! Live session: one thread owns the simulator, the mapping pipeline and the
//! navigator; each WebSocket connection runs on its own thread and talks to it
//! over channels.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use mazeslam_core::log::write_trajectory;
use mazeslam_core::nav::{NavStep, Navigator, PlanError};
use mazeslam_core::{
    save_map, Goal, LidarScan, MappingPipeline, NavOutcome, OdomMode, Point2, Pose2, Record, RunConfig, Simulator,
    Twist2, WorldModel,
};
use tungstenite::{Message, WebSocket};

use crate::commands::{load_world, setup, write_records, write_text, write_with};
use crate::protocol::{decimate_poses, ClientMsg, NavStatus, Role, ScanFrame, ServerMsg};
use crate::{runtime, Failure, Global};

enum Event {
    Connect { id: u64, tx: Sender<String> },
    Text { id: u64, text: String },
    Disconnect { id: u64 },
}

struct Client {
    id: u64,
    role: Role,
    tx: Sender<String>,
}

struct NavState {
    nav: Option<Navigator>,
    goal: Point2,
    status: &'static str,
    path: Vec<[f64; 2]>,
}

/// Everything that a reset throws away.
struct Session {
    sim: Simulator,
    pipeline: MappingPipeline,
    records: Vec<Record>,
    last_scan: Option<LidarScan>,
    /// Latest teleop command and the sim time it arrived.
    teleop: Option<(Twist2, f64)>,
    nav: Option<NavState>,
}

impl Session {
    fn new(world: &WorldModel, cfg: &RunConfig, mode: OdomMode) -> Result<Self, Failure> {
        let mut sim = Simulator::new(world.clone(), cfg.sim, cfg.seed).map_err(|e| crate::input(anyhow!(e)))?;
        let first = sim.initial_records();
        let spawn = sim.state().true_pose;
        let mut s = Session {
            sim,
            pipeline: MappingPipeline::new(mode, cfg.fusion, cfg.slam, cfg.seed, spawn, 0.0),
            records: Vec::new(),
            last_scan: None,
            teleop: None,
            nav: None,
        };
        s.ingest(first).map_err(runtime)?;
        Ok(s)
    }

    fn ingest(&mut self, recs: Vec<Record>) -> anyhow::Result<bool> {
        let mut updated = false;
        for r in &recs {
            updated |= self.pipeline.push(r)?.is_some();
            if let Some(scan) = r.as_scan() {
                self.last_scan = Some(scan);
            }
        }
        self.records.extend(recs);
        Ok(updated)
    }

    /// Rebuilds the pipeline in `mode` from the recorded log.
    fn switch_mode(&mut self, mode: OdomMode, cfg: &RunConfig) -> anyhow::Result<()> {
        let (start, t0) = mazeslam_core::fusion::initial_pose(&self.records);
        let mut p = MappingPipeline::new(mode, cfg.fusion, cfg.slam, cfg.seed, start, t0);
        for r in &self.records {
            p.push(r)?;
        }
        self.pipeline = p;
        Ok(())
    }

    fn command(&mut self, cfg: &RunConfig, map_tick: bool) -> Twist2 {
        let t = self.sim.state().clock;
        if let Some(ns) = self.nav.as_mut() {
            if let Some(nav) = ns.nav.as_mut() {
                let update = if map_tick { self.pipeline.map() } else { None };
                let step = nav.step(self.pipeline.pose(), t, update);
                ns.path = nav
                    .path()
                    .map(|p| p.waypoints.iter().map(|w| [w.x, w.y]).collect())
                    .unwrap_or_default();
                match step {
                    Ok(NavStep::Drive(cmd)) => return cmd,
                    Ok(NavStep::Done(outcome)) => ns.status = outcome.as_str(),
                    Err(_) => ns.status = NavOutcome::NoPath.as_str(),
                }
                ns.nav = None;
            }
        }
        match self.teleop {
            Some((cmd, at)) if t - at <= cfg.serve.deadman + 1e-9 => cmd,
            _ => Twist2::ZERO,
        }
    }

    fn state_frame(&self, cfg: &RunConfig) -> ServerMsg {
        let particles: Vec<Pose2> = self
            .pipeline
            .slam()
            .map(|s| s.particles().iter().map(|p| p.pose).collect())
            .unwrap_or_default();
        ServerMsg::State {
            t: self.sim.state().clock,
            pose: self.pipeline.pose(),
            gt: self.sim.state().true_pose,
            mode: self.pipeline.mode(),
            scan: self.last_scan.as_ref().map(|s| ScanFrame::decimated(s, cfg.serve.max_scan_beams)),
            particles: decimate_poses(&particles, cfg.serve.max_particles),
            nav: self.nav.as_ref().map(|n| NavStatus {
                goal: [n.goal.x, n.goal.y],
                status: n.status.to_string(),
                path: n.path.clone(),
            }),
        }
    }
}

pub fn run(
    g: &Global,
    world: Option<PathBuf>,
    port: Option<u16>,
    mode: Option<OdomMode>,
    ticks: Option<u64>,
) -> Result<(), Failure> {
    let mut cfg = setup(g, world, mode)?;
    if let Some(p) = port {
        cfg.serve.port = p;
    }
    let world = load_world(&cfg)?;
    let listener = TcpListener::bind(("127.0.0.1", cfg.serve.port))
        .with_context(|| format!("binding port {}", cfg.serve.port))
        .map_err(runtime)?;
    let addr = listener.local_addr().map_err(runtime)?;

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        // A second handler cannot be installed in the same process; the tick
        // limit still stops the session then.
        let _ = ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst));
    }
    let (events_tx, events) = mpsc::channel();
    thread::spawn(move || accept_loop(listener, events_tx));
    println!("listening on ws://{addr}");

    let mut session = Session::new(&world, &cfg, cfg.mode)?;
    let mut clients: Vec<Client> = Vec::new();
    let walls: Vec<[f64; 4]> = world.segments.iter().map(|s| [s.a.x, s.a.y, s.b.x, s.b.y]).collect();
    let period = Duration::from_secs_f64(1.0 / cfg.serve.sim_rate);
    let state_every = (cfg.serve.sim_rate / cfg.serve.state_rate).round().max(1.0) as u64;
    let map_every = (cfg.serve.sim_rate / cfg.serve.map_rate).round().max(1.0) as u64;
    let mut next = Instant::now();
    let mut tick: u64 = 0;

    while !stop.load(Ordering::SeqCst) && ticks.is_none_or(|n| tick < n) {
        loop {
            match events.try_recv() {
                Ok(ev) => handle_event(ev, &mut clients, &mut session, &world, &cfg, &walls)?,
                Err(TryRecvError::Empty | TryRecvError::Disconnected) => break,
            }
        }
        tick += 1;
        let map_tick = tick % map_every == 0;
        let cmd = session.command(&cfg, map_tick);
        let recs = session.sim.step(cmd);
        session.ingest(recs).map_err(runtime)?;
        if tick % state_every == 0 {
            broadcast(&mut clients, &session.state_frame(&cfg).to_text());
        }
        if map_tick {
            if let Some(m) = session.pipeline.map() {
                broadcast(&mut clients, &ServerMsg::map(m).to_text());
            }
        }
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    }

    clients.clear();
    cfg.mode = session.pipeline.mode();
    write_text(&g.out.join("config.json"), &cfg.to_json())?;
    write_records(&g.out.join("log.jsonl"), &session.records)?;
    write_with(&g.out.join("trajectory.csv"), |w| write_trajectory(w, &session.pipeline.trajectory()))?;
    if let Some(m) = session.pipeline.map() {
        save_map(m, g.out.join("map")).map_err(runtime)?;
    }
    println!(
        "session ended at t = {:.2} s after {} ticks, {} records",
        session.sim.state().clock,
        tick,
        session.records.len()
    );
    Ok(())
}

fn send(c: &Client, text: String) -> bool {
    c.tx.send(text).is_ok()
}

fn broadcast(clients: &mut Vec<Client>, text: &str) {
    clients.retain(|c| send(c, text.to_string()));
}

fn handle_event(
    ev: Event,
    clients: &mut Vec<Client>,
    session: &mut Session,
    world: &WorldModel,
    cfg: &RunConfig,
    walls: &[[f64; 4]],
) -> Result<(), Failure> {
    match ev {
        Event::Connect { id, tx } => {
            let role = if clients.iter().any(|c| c.role == Role::Driver) {
                Role::Observer
            } else {
                Role::Driver
            };
            let c = Client { id, role, tx };
            let hello = ServerMsg::Hello {
                role,
                mode: session.pipeline.mode(),
                walls: walls.to_vec(),
            };
            if send(&c, hello.to_text()) {
                if let Some(m) = session.pipeline.map() {
                    send(&c, ServerMsg::map(m).to_text());
                }
                clients.push(c);
            }
        }
        Event::Disconnect { id } => {
            clients.retain(|c| c.id != id);
            if !clients.iter().any(|c| c.role == Role::Driver) {
                if let Some(c) = clients.first_mut() {
                    c.role = Role::Driver;
                    let hello = ServerMsg::Hello {
                        role: Role::Driver,
                        mode: session.pipeline.mode(),
                        walls: walls.to_vec(),
                    };
                    send(c, hello.to_text());
                }
            }
        }
        Event::Text { id, text } => {
            let Some(c) = clients.iter().find(|c| c.id == id) else {
                return Ok(());
            };
            let reply = match ClientMsg::parse(&text) {
                Err(e) => Some(e),
                Ok(_) if c.role != Role::Driver => Some("observers cannot control the robot".into()),
                Ok(msg) => apply(msg, session, world, cfg)?,
            };
            if let Some(e) = reply {
                send(c, ServerMsg::error(e).to_text());
            }
        }
    }
    Ok(())
}

/// Applies a driver message; returns an error text for the client.
fn apply(msg: ClientMsg, session: &mut Session, world: &WorldModel, cfg: &RunConfig) -> Result<Option<String>, Failure> {
    let t = session.sim.state().clock;
    match msg {
        ClientMsg::Teleop { v, w } => {
            session.teleop = Some((Twist2::new(v, w), t));
            session.nav = None;
        }
        ClientMsg::Goal { x, y, theta } => {
            let Some(map) = session.pipeline.map() else {
                return Ok(Some("no map yet".into()));
            };
            let goal = Goal {
                position: Point2::new(x, y),
                heading: theta,
            };
            session.teleop = None;
            let (nav, status) = match Navigator::start(map, goal, cfg.nav, session.pipeline.pose(), t) {
                Ok(n) => (Some(n), "active"),
                Err(PlanError::NoPath) => (None, NavOutcome::NoPath.as_str()),
                Err(e) => {
                    session.nav = None;
                    return Ok(Some(format!("goal rejected: {e}")));
                }
            };
            let path = nav
                .as_ref()
                .and_then(|n| n.path())
                .map(|p| p.waypoints.iter().map(|w| [w.x, w.y]).collect())
                .unwrap_or_default();
            session.nav = Some(NavState {
                nav,
                goal: goal.position,
                status,
                path,
            });
        }
        ClientMsg::Reset => {
            let mode = session.pipeline.mode();
            *session = Session::new(world, cfg, mode)?;
        }
        ClientMsg::Mode { mode } => {
            if mode != session.pipeline.mode() {
                session.switch_mode(mode, cfg).map_err(runtime)?;
            }
        }
    }
    Ok(None)
}

fn accept_loop(listener: TcpListener, events: Sender<Event>) {
    for (id, stream) in (0u64..).zip(listener.incoming()) {
        let Ok(stream) = stream else { continue };
        let events = events.clone();
        thread::spawn(move || client_loop(id, stream, events));
    }
}

fn client_loop(id: u64, stream: TcpStream, events: Sender<Event>) {
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    if ws.get_ref().set_read_timeout(Some(Duration::from_millis(10))).is_err() {
        return;
    }
    let (tx, outbound) = mpsc::channel();
    if events.send(Event::Connect { id, tx }).is_err() {
        return;
    }
    let _ = pump(&mut ws, &outbound, id, &events);
    let _ = ws.close(None);
    let _ = ws.flush();
    let _ = events.send(Event::Disconnect { id });
}

/// Moves frames both ways until either side goes away.
fn pump(ws: &mut WebSocket<TcpStream>, outbound: &Receiver<String>, id: u64, events: &Sender<Event>) -> Result<(), ()> {
    loop {
        loop {
            match outbound.try_recv() {
                Ok(text) => ws.send(Message::text(text)).map_err(|_| ())?,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return Ok(()),
            }
        }
        match ws.read() {
            Ok(Message::Text(t)) => events
                .send(Event::Text {
                    id,
                    text: t.as_str().to_string(),
                })
                .map_err(|_| ())?,
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => return Err(()),
        }
    }
}
