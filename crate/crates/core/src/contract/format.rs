//! Flat `key=value` text form of a contract.
//!
//! ```text
//! format=tou-contract/1
//! p_o_ref=20
//! types=F,P,N,N
//! partial_ratio=0.55
//! item.F.p_delta=4.9
//! item.F.eta=1
//! ...
//! user.u1.type=0
//! user.u1.F.p_peak=24.1
//! user.u1.F.p_offpeak=19.2
//! note=class N empty
//! ```
//!
//! Keys are unique except `note`, which may repeat. Lines starting with `#`
//! are comments. User ids must not contain `=` or line breaks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{ItemClass, PriceLevels, TariffItem, UserId};
use crate::scm::{Classification, PartialType};

use super::Contract;

pub const CONTRACT_FORMAT: &str = "tou-contract/1";

/// Serializes `contract`. `user_types` gives each priced user's type index,
/// which the format records so a reader can re-derive intended items.
pub fn write_contract(contract: &Contract, user_types: &BTreeMap<UserId, usize>) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "format={CONTRACT_FORMAT}");
    let _ = writeln!(out, "p_o_ref={}", contract.p_o_ref);
    let labels: Vec<&str> = contract.type_classes.iter().map(|c| c.label()).collect();
    let _ = writeln!(out, "types={}", labels.join(","));
    let _ = writeln!(
        out,
        "partial_ratio={}",
        contract.classification.eta_partial()
    );
    for item in &contract.items {
        let _ = writeln!(out, "item.{}.p_delta={}", item.class, item.p_delta);
        let _ = writeln!(out, "item.{}.eta={}", item.class, item.eta);
    }
    for (id, k) in user_types {
        if id.0.contains(['=', '\n', '\r']) || id.0.is_empty() {
            return Err(Error::Data(format!(
                "user id {:?} cannot be written as a key",
                id.0
            )));
        }
        let _ = writeln!(out, "user.{id}.type={k}");
        for item in &contract.items {
            let lv = item.levels_for(id)?;
            let _ = writeln!(out, "user.{id}.{}.p_peak={}", item.class, lv.peak);
            let _ = writeln!(out, "user.{id}.{}.p_offpeak={}", item.class, lv.offpeak);
        }
    }
    for note in &contract.notes {
        let _ = writeln!(out, "note={}", note.replace('\n', " "));
    }
    Ok(out)
}

/// Parses the text form back into a contract and the recorded user types.
pub fn parse_contract(text: &str) -> Result<(Contract, BTreeMap<UserId, usize>)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: "<contract>".into(),
        line: line as u64,
        msg,
    };
    let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut notes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(i + 1, format!("expected key=value, got {line:?}")))?;
        if key == "note" {
            notes.push(value.to_owned());
            continue;
        }
        if fields
            .insert(key.to_owned(), (i + 1, value.to_owned()))
            .is_some()
        {
            return Err(err(i + 1, format!("duplicate key {key:?}")));
        }
    }

    let take =
        |fields: &mut BTreeMap<String, (usize, String)>, key: &str| -> Result<(usize, String)> {
            fields
                .remove(key)
                .ok_or_else(|| err(0, format!("missing key {key:?}")))
        };
    let number = |(line, v): (usize, String)| -> Result<f64> {
        v.parse::<f64>()
            .map_err(|e| err(line, format!("{v:?}: {e}")))
    };

    let (line, fmt) = take(&mut fields, "format")?;
    if fmt != CONTRACT_FORMAT {
        return Err(err(line, format!("unsupported format {fmt:?}")));
    }
    let p_o_ref = number(take(&mut fields, "p_o_ref")?)?;
    let (line, types) = take(&mut fields, "types")?;
    let type_classes = types
        .split(',')
        .map(|s| {
            ItemClass::parse(s.trim()).ok_or_else(|| err(line, format!("unknown class {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let ratio = number(take(&mut fields, "partial_ratio")?)?;

    let mut classification = Classification {
        full: Vec::new(),
        partial: None,
        none: Vec::new(),
    };
    for (k, class) in type_classes.iter().enumerate() {
        match class {
            ItemClass::F => classification.full.push(k),
            ItemClass::N => classification.none.push(k),
            ItemClass::P => {
                if classification.partial.is_some() {
                    return Err(err(line, "more than one partial type".into()));
                }
                classification.partial = Some(PartialType { k, ratio });
            }
        }
    }

    let mut items = ItemClass::ALL.map(|class| TariffItem {
        class,
        p_delta: 0.0,
        eta: 0.0,
        price_levels: BTreeMap::new(),
    });
    for item in items.iter_mut() {
        item.p_delta = number(take(&mut fields, &format!("item.{}.p_delta", item.class))?)?;
        item.eta = number(take(&mut fields, &format!("item.{}.eta", item.class))?)?;
    }

    let mut user_types = BTreeMap::new();
    let mut partial_levels: BTreeMap<(UserId, ItemClass), (Option<f64>, Option<f64>)> =
        BTreeMap::new();
    for (key, (line, value)) in fields {
        let rest = key
            .strip_prefix("user.")
            .ok_or_else(|| err(line, format!("unknown key {key:?}")))?;
        let (head, field) = rest
            .rsplit_once('.')
            .ok_or_else(|| err(line, format!("malformed user key {key:?}")))?;
        if field == "type" {
            let k: usize = value
                .parse()
                .map_err(|e| err(line, format!("{value:?}: {e}")))?;
            user_types.insert(UserId::new(head), k);
            continue;
        }
        let (id, class) = head
            .rsplit_once('.')
            .ok_or_else(|| err(line, format!("malformed user key {key:?}")))?;
        let class =
            ItemClass::parse(class).ok_or_else(|| err(line, format!("unknown item {class:?}")))?;
        let v = number((line, value))?;
        let slot = partial_levels.entry((UserId::new(id), class)).or_default();
        match field {
            "p_peak" => slot.0 = Some(v),
            "p_offpeak" => slot.1 = Some(v),
            _ => return Err(err(line, format!("unknown user field {field:?}"))),
        }
    }
    for ((id, class), levels) in partial_levels {
        let (Some(peak), Some(offpeak)) = levels else {
            return Err(err(
                0,
                format!("user {id} item {class}: incomplete price levels"),
            ));
        };
        if !user_types.contains_key(&id) {
            return Err(err(0, format!("user {id} has prices but no type")));
        }
        items[class.index()]
            .price_levels
            .insert(id, PriceLevels { peak, offpeak });
    }

    Ok((
        Contract {
            items,
            classification,
            type_classes,
            p_o_ref,
            notes,
        },
        user_types,
    ))
}
