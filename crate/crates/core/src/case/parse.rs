//! Plain-text case format.
//!
//! ```text
//! [system]      key value        (base_mva, frequency)
//! [bus]         id type pd qd gs bs vm va vmax vmin [zero_injection]
//! [branch]      from to r x b rate [ratio]
//! [gen]         bus pg qg qmax qmin vg pmax pmin H D xd xd' xq xq' Td0' Tq0' [Ka]
//! [pmu]         bus [far-end bus ...]
//! [renewable]   bus p q capacity
//! ```
//!
//! Bus types use MATPOWER codes (1 PQ, 2 PV, 3 slack) or the words
//! `pq`, `pv`, `slack`. Powers are MW/MVAr, shunts MW/MVAr at 1 p.u.,
//! angles degrees, `rate = 0` means unrated, `ratio = 0` means 1.
//! `H` is in seconds, `D` in p.u. power per p.u. speed, `Ka` the optional
//! proportional voltage-regulator gain (default 0). `#` and `%`
//! start comments.

use super::{Bus, BusType, Generator, GeneratorParams, GridCase, Line, Pmu, Renewable};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    System,
    Bus,
    Branch,
    Gen,
    Pmu,
    Renewable,
}

struct RawGen {
    bus: usize,
    pg: f64,
    vg: f64,
    qmax: f64,
    qmin: f64,
    pmax: f64,
    pmin: f64,
    h: f64,
    d: f64,
    rest: [f64; 6],
    ka: f64,
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        message: message.into(),
    }
}

fn numbers(tokens: &[&str], line: usize) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| syntax(line, format!("expected a number, found `{t}`")))
        })
        .collect()
}

fn bus_id(token: &str, line: usize) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| syntax(line, format!("expected a bus id, found `{token}`")))
}

fn arity(tokens: &[&str], allowed: &[usize], line: usize, what: &str) -> Result<()> {
    if allowed.contains(&tokens.len()) {
        Ok(())
    } else {
        Err(syntax(
            line,
            format!(
                "{what} row needs {allowed:?} columns, found {}",
                tokens.len()
            ),
        ))
    }
}

/// Parses and validates a case file.
pub fn parse_case(text: &str) -> Result<GridCase> {
    let mut section = Section::None;
    let mut base_mva = 100.0;
    let mut frequency = 60.0;
    let mut raw_buses: Vec<(usize, BusType, Vec<f64>, Option<bool>)> = Vec::new();
    let mut lines = Vec::new();
    let mut gens: Vec<RawGen> = Vec::new();
    let mut pmus = Vec::new();
    let mut renewables: Vec<(usize, f64, f64, f64)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let content = raw.split(['#', '%']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            let name = content
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| syntax(ln, "malformed section header"))?;
            section = match name.trim().to_ascii_lowercase().as_str() {
                "system" => Section::System,
                "bus" => Section::Bus,
                "branch" => Section::Branch,
                "gen" => Section::Gen,
                "pmu" => Section::Pmu,
                "renewable" => Section::Renewable,
                other => return Err(syntax(ln, format!("unknown section `{other}`"))),
            };
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match section {
            Section::None => return Err(syntax(ln, "data before any section header")),
            Section::System => {
                arity(&tokens, &[2], ln, "system")?;
                let value: f64 = tokens[1]
                    .parse()
                    .map_err(|_| syntax(ln, format!("expected a number, found `{}`", tokens[1])))?;
                match tokens[0] {
                    "base_mva" => base_mva = value,
                    "frequency" | "frequency_hz" => frequency = value,
                    other => return Err(syntax(ln, format!("unknown system key `{other}`"))),
                }
            }
            Section::Bus => {
                arity(&tokens, &[10, 11], ln, "bus")?;
                let id = bus_id(tokens[0], ln)?;
                let kind = match tokens[1].to_ascii_lowercase().as_str() {
                    "1" | "pq" => BusType::PQ,
                    "2" | "pv" => BusType::PV,
                    "3" | "slack" | "ref" => BusType::Slack,
                    other => return Err(syntax(ln, format!("unknown bus type `{other}`"))),
                };
                let vals = numbers(&tokens[2..10], ln)?;
                let zi = match tokens.get(10) {
                    None => None,
                    Some(&"0") => Some(false),
                    Some(&"1") => Some(true),
                    Some(t) => {
                        return Err(syntax(
                            ln,
                            format!("zero_injection flag must be 0 or 1, found `{t}`"),
                        ))
                    }
                };
                raw_buses.push((id, kind, vals, zi));
            }
            Section::Branch => {
                arity(&tokens, &[6, 7], ln, "branch")?;
                let from = bus_id(tokens[0], ln)?;
                let to = bus_id(tokens[1], ln)?;
                let v = numbers(&tokens[2..], ln)?;
                let rating = if v[3] == 0.0 {
                    f64::INFINITY
                } else {
                    v[3] / base_mva
                };
                let tap = match v.get(4) {
                    Some(&t) if t != 0.0 => t,
                    _ => 1.0,
                };
                lines.push(Line {
                    from,
                    to,
                    r: v[0],
                    x: v[1],
                    b_shunt: v[2],
                    rating,
                    tap,
                });
            }
            Section::Gen => {
                arity(&tokens, &[16, 17], ln, "gen")?;
                let bus = bus_id(tokens[0], ln)?;
                let v = numbers(&tokens[1..], ln)?;
                gens.push(RawGen {
                    bus,
                    pg: v[0],
                    qmax: v[2],
                    qmin: v[3],
                    vg: v[4],
                    pmax: v[5],
                    pmin: v[6],
                    h: v[7],
                    d: v[8],
                    rest: [v[9], v[10], v[11], v[12], v[13], v[14]],
                    ka: v.get(15).copied().unwrap_or(0.0),
                });
            }
            Section::Pmu => {
                let bus = bus_id(tokens[0], ln)?;
                let metered_lines = if tokens.len() > 1 {
                    Some(
                        tokens[1..]
                            .iter()
                            .map(|t| bus_id(t, ln))
                            .collect::<Result<Vec<_>>>()?,
                    )
                } else {
                    None
                };
                pmus.push(Pmu { bus, metered_lines });
            }
            Section::Renewable => {
                arity(&tokens, &[4], ln, "renewable")?;
                let bus = bus_id(tokens[0], ln)?;
                let v = numbers(&tokens[1..], ln)?;
                renewables.push((bus, v[0], v[1], v[2]));
            }
        }
    }

    let omega_0 = 2.0 * std::f64::consts::PI * frequency;
    let generators: Vec<Generator> = gens
        .iter()
        .map(|g| Generator {
            bus: g.bus,
            p_set: g.pg / base_mva,
            v_set: g.vg,
            p_min: g.pmin / base_mva,
            p_max: g.pmax / base_mva,
            q_min: g.qmin / base_mva,
            q_max: g.qmax / base_mva,
            params: GeneratorParams {
                m: 2.0 * g.h / omega_0,
                d: g.d / omega_0,
                xd: g.rest[0],
                xd_prime: g.rest[1],
                xq: g.rest[2],
                xq_prime: g.rest[3],
                td0_prime: g.rest[4],
                tq0_prime: g.rest[5],
                omega_0,
                avr_gain: g.ka,
            },
        })
        .collect();
    let renewables: Vec<Renewable> = renewables
        .into_iter()
        .map(|(bus, p, q, cap)| Renewable {
            bus,
            p: p / base_mva,
            q: q / base_mva,
            capacity: cap / base_mva,
        })
        .collect();

    let buses = raw_buses
        .into_iter()
        .map(|(id, kind, v, zi)| {
            let has_gen = generators.iter().any(|g| g.bus == id);
            let has_ren = renewables.iter().any(|r| r.bus == id);
            let v_set = generators
                .iter()
                .find(|g| g.bus == id)
                .map(|g| g.v_set)
                .unwrap_or(v[4]);
            let p_load = v[0] / base_mva;
            let q_load = v[1] / base_mva;
            Bus {
                id,
                kind,
                v_set,
                p_load,
                q_load,
                g_shunt: v[2] / base_mva,
                b_shunt: v[3] / base_mva,
                v_max: v[6],
                v_min: v[7],
                is_zero_injection: zi
                    .unwrap_or(!has_gen && !has_ren && p_load == 0.0 && q_load == 0.0),
            }
        })
        .collect();

    GridCase::new(
        base_mva, frequency, buses, lines, generators, renewables, pmus,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dangling_line_is_rejected() {
        let text = "[bus]\n1 3 0 0 0 0 1 0 1.1 0.9\n[branch]\n1 99 0 0.1 0 0\n";
        assert!(matches!(parse_case(text), Err(Error::UnknownBus(99))));
    }

    #[test]
    fn two_slacks_rejected() {
        let text = "[bus]\n1 3 0 0 0 0 1 0 1.1 0.9\n2 3 0 0 0 0 1 0 1.1 0.9\n";
        assert!(matches!(parse_case(text), Err(Error::InvalidCase(_))));
    }

    #[test]
    fn syntax_error_carries_line_number() {
        let text = "[bus]\n# comment\n1 3 0 0 0 zero 1 0 1.1 0.9\n";
        match parse_case(text) {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_injection_derived_when_absent() {
        let text =
            "[bus]\n1 3 0 0 0 0 1 0 1.1 0.9\n2 1 0 0 0 0 1 0 1.1 0.9\n3 1 10 0 0 0 1 0 1.1 0.9\n";
        let case = parse_case(text).unwrap();
        assert!(case.buses[0].is_zero_injection);
        assert!(case.buses[1].is_zero_injection);
        assert!(!case.buses[2].is_zero_injection);
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(matches!(
            parse_case("[foo]\n"),
            Err(Error::Syntax { line: 1, .. })
        ));
    }
}
