//! `key = value` files for dynamic parameters and event lists for scenarios.

use std::collections::BTreeMap;

use swingmor_core::case::PowerCase;
use swingmor_core::network::GenDynamicParams;
use swingmor_core::scenario::{Event, EventKind, GenTarget, FAULT_ADMITTANCE};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: no generator at bus {bus}")]
    UnknownBus { line: usize, bus: u32 },
}

fn syntax(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Syntax { line, msg: msg.into() }
}

fn content(raw: &str) -> &str {
    let cut = raw.find(['#', '%']).unwrap_or(raw.len());
    raw[..cut].trim()
}

/// Applies a parameter file on top of the case defaults.
///
/// Recognized keys: `h_default`, `d_default`, `xdp_default`, `f_nominal`,
/// `h_load`, `d_load` and per-bus overrides `h[<bus>]`, `d[<bus>]`,
/// `xdp[<bus>]` that apply to every generator at that bus.
pub fn parse_params(text: &str, case: &PowerCase) -> Result<GenDynamicParams, ConfigError> {
    let mut p = GenDynamicParams::defaults_for(case);
    let mut overrides: Vec<(usize, &str, u32, f64)> = Vec::new();
    let mut defaults: BTreeMap<&str, f64> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = content(raw);
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| syntax(line, "expected key = value"))?;
        let key = key.trim();
        let value: f64 = value.trim().parse().map_err(|_| syntax(line, format!("bad number {:?}", value.trim())))?;
        if let Some((name, rest)) = key.split_once('[') {
            let bus: u32 = rest
                .strip_suffix(']')
                .and_then(|b| b.trim().parse().ok())
                .ok_or_else(|| syntax(line, format!("bad override key {key:?}")))?;
            let name = match name.trim() {
                "h" => "h",
                "d" => "d",
                "xdp" => "xdp",
                other => return Err(syntax(line, format!("unknown override {other:?}"))),
            };
            overrides.push((line, name, bus, value));
        } else {
            let key = match key {
                "h_default" => "h_default",
                "d_default" => "d_default",
                "xdp_default" => "xdp_default",
                "f_nominal" => "f_nominal",
                "h_load" => "h_load",
                "d_load" => "d_load",
                other => return Err(syntax(line, format!("unknown key {other:?}"))),
            };
            defaults.insert(key, value);
        }
    }
    let n = case.gens.len();
    for (key, v) in defaults {
        match key {
            "h_default" => p.h = vec![v; n],
            "d_default" => p.d = vec![v; n],
            "xdp_default" => p.xdp = vec![v; n],
            "f_nominal" => p.f_nominal = v,
            "h_load" => p.h_load = v,
            _ => p.d_load = v,
        }
    }
    for (line, name, bus, v) in overrides {
        let mut hit = false;
        for (g, gen) in case.gens.iter().enumerate() {
            if gen.bus == bus {
                hit = true;
                match name {
                    "h" => p.h[g] = v,
                    "d" => p.d[g] = v,
                    _ => p.xdp[g] = v,
                }
            }
        }
        if !hit {
            return Err(ConfigError::UnknownBus { line, bus });
        }
    }
    Ok(p)
}

/// Text form of the parameters, one key per line.
pub fn render_params(p: &GenDynamicParams, case: &PowerCase) -> String {
    let mut s = format!("f_nominal = {:?}\nh_load = {:?}\nd_load = {:?}\n", p.f_nominal, p.h_load, p.d_load);
    let uniform = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
    for (name, v) in [("h", &p.h), ("d", &p.d), ("xdp", &p.xdp)] {
        if uniform(v) && !v.is_empty() {
            s.push_str(&format!("{name}_default = {:?}\n", v[0]));
        } else {
            for (g, val) in v.iter().enumerate() {
                s.push_str(&format!("{name}[{}] = {val:?}\n", case.gens[g].bus));
            }
        }
    }
    s
}

fn kv<'a>(tokens: &[&'a str], line: usize) -> Result<BTreeMap<&'a str, &'a str>, ConfigError> {
    tokens
        .iter()
        .map(|t| t.split_once('=').ok_or_else(|| syntax(line, format!("expected key=value, got {t:?}"))))
        .collect()
}

fn get<T: std::str::FromStr>(map: &BTreeMap<&str, &str>, key: &str, line: usize) -> Result<T, ConfigError> {
    let raw = map.get(key).ok_or_else(|| syntax(line, format!("missing {key}=")))?;
    raw.parse().map_err(|_| syntax(line, format!("bad value for {key}: {raw:?}")))
}

fn gen_target(map: &BTreeMap<&str, &str>, line: usize) -> Result<GenTarget, ConfigError> {
    if map.contains_key("bus") {
        Ok(GenTarget::Bus(get(map, "bus", line)?))
    } else if map.contains_key("gen") {
        Ok(GenTarget::Index(get(map, "gen", line)?))
    } else {
        Err(syntax(line, "generator events need bus= or gen="))
    }
}

/// One event per line: `<time> <kind> <key=value...>`, for example
/// `1.0 gen_outage bus=89`, `1.0 bus_fault_on bus=1 y=1e4`,
/// `2.5 line_trip from=1 to=2`.
pub fn parse_scenario(text: &str) -> Result<Vec<Event>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = content(raw);
        if body.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = body.split_whitespace().collect();
        if tokens.len() < 2 {
            return Err(syntax(line, "expected <time> <kind> ..."));
        }
        let time: f64 = tokens[0].parse().map_err(|_| syntax(line, format!("bad time {:?}", tokens[0])))?;
        let map = kv(&tokens[2..], line)?;
        let kind = match tokens[1] {
            "gen_outage" => EventKind::GenOutage(gen_target(&map, line)?),
            "gen_restore" => EventKind::GenRestore(gen_target(&map, line)?),
            "bus_fault_on" => EventKind::BusFaultOn {
                bus: get(&map, "bus", line)?,
                admittance: if map.contains_key("y") { get(&map, "y", line)? } else { FAULT_ADMITTANCE },
            },
            "bus_fault_off" => EventKind::BusFaultOff { bus: get(&map, "bus", line)? },
            "line_trip" => EventKind::LineTrip { from: get(&map, "from", line)?, to: get(&map, "to", line)? },
            other => return Err(syntax(line, format!("unknown event kind {other:?}"))),
        };
        out.push(Event::new(time, kind));
    }
    Ok(out)
}

pub fn render_event(e: &Event) -> String {
    let tail = match &e.kind {
        EventKind::GenOutage(t) | EventKind::GenRestore(t) => match t {
            GenTarget::Bus(b) => format!("bus={b}"),
            GenTarget::Index(g) => format!("gen={g}"),
        },
        EventKind::BusFaultOn { bus, admittance } => format!("bus={bus} y={admittance:?}"),
        EventKind::BusFaultOff { bus } => format!("bus={bus}"),
        EventKind::LineTrip { from, to } => format!("from={from} to={to}"),
    };
    let kind = match e.kind {
        EventKind::GenOutage(_) => "gen_outage",
        EventKind::GenRestore(_) => "gen_restore",
        EventKind::BusFaultOn { .. } => "bus_fault_on",
        EventKind::BusFaultOff { .. } => "bus_fault_off",
        EventKind::LineTrip { .. } => "line_trip",
    };
    format!("{:?} {kind} {tail}", e.time)
}
