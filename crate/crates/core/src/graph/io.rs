use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Transaction, TransactionLog, UbiGraph};
use crate::error::{Error, Result};

/// Header names of the user, basket and item columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnSpec {
    pub user: String,
    pub basket: String,
    pub item: String,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            user: "user_id".into(),
            basket: "basket_id".into(),
            item: "item_id".into(),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Tab if the header line contains a tab, comma otherwise.
fn sniff_delimiter(path: &Path) -> Result<u8> {
    let mut first = String::new();
    BufReader::new(open(path)?)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(if first.contains('\t') { b'\t' } else { b',' })
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "{}: no column named `{name}` (found: {})",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
}

/// Reads a delimiter-separated transaction file with a header row.
pub fn load_transactions(path: &Path, columns: &ColumnSpec) -> Result<TransactionLog> {
    let delimiter = sniff_delimiter(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(open(path)?);
    let headers = reader.headers()?.clone();
    let (cu, cb, ci) = (
        column(&headers, &columns.user, path)?,
        column(&headers, &columns.basket, path)?,
        column(&headers, &columns.item, path)?,
    );
    let mut raw = Vec::new();
    for row in reader.records() {
        let row = row?;
        raw.push(Transaction {
            user: row[cu].trim().to_owned(),
            basket: row[cb].trim().to_owned(),
            item: row[ci].trim().to_owned(),
        });
    }
    let n_raw = raw.len();
    let log = TransactionLog::from_records(raw)?;
    if log.is_empty() {
        log::warn!("{}: no transactions", path.display());
    } else {
        log::info!(
            "{}: {} records ({} duplicates removed)",
            path.display(),
            log.len(),
            n_raw - log.len()
        );
    }
    Ok(log)
}

/// Joins the public Instacart export (`orders.csv` with
/// `order_products__prior.csv` and `order_products__train.csv`) into a
/// transaction log with orders as baskets. Orders with fewer than
/// `min_basket_size` distinct products are discarded while streaming.
pub fn load_instacart(dir: &Path, min_basket_size: usize) -> Result<TransactionLog> {
    let orders_path = dir.join("orders.csv");
    let mut orders = csv::Reader::from_reader(open(&orders_path)?);
    let headers = orders.headers()?.clone();
    let (co, cu) = (
        column(&headers, "order_id", &orders_path)?,
        column(&headers, "user_id", &orders_path)?,
    );
    let mut order_user: HashMap<u32, u32> = HashMap::new();
    for row in orders.records() {
        let row = row?;
        let o = parse_id(&row[co], &orders_path)?;
        let u = parse_id(&row[cu], &orders_path)?;
        order_user.insert(o, u);
    }

    let mut order_slot: HashMap<u32, usize> = HashMap::new();
    let mut baskets: Vec<(u32, Vec<u32>)> = Vec::new();
    let mut n_raw = 0usize;
    for name in ["order_products__prior.csv", "order_products__train.csv"] {
        let path = dir.join(name);
        if !path.exists() {
            log::warn!("{} not found, skipping", path.display());
            continue;
        }
        let mut reader = csv::Reader::from_reader(open(&path)?);
        let headers = reader.headers()?.clone();
        let (co, cp) = (
            column(&headers, "order_id", &path)?,
            column(&headers, "product_id", &path)?,
        );
        for row in reader.records() {
            let row = row?;
            n_raw += 1;
            let o = parse_id(&row[co], &path)?;
            let p = parse_id(&row[cp], &path)?;
            let slot = *order_slot.entry(o).or_insert_with(|| {
                baskets.push((o, Vec::new()));
                baskets.len() - 1
            });
            baskets[slot].1.push(p);
        }
    }
    log::info!(
        "instacart: {n_raw} raw order-product rows over {} orders",
        baskets.len()
    );

    let mut records = Vec::new();
    for (order, mut products) in baskets {
        let Some(&user) = order_user.get(&order) else {
            return Err(Error::DataIntegrity(format!(
                "order {order} has products but no row in orders.csv"
            )));
        };
        let mut seen = std::collections::HashSet::new();
        products.retain(|p| seen.insert(*p));
        if products.len() < min_basket_size {
            continue;
        }
        for p in products {
            records.push(Transaction {
                user: user.to_string(),
                basket: order.to_string(),
                item: p.to_string(),
            });
        }
    }
    TransactionLog::from_records(records)
}

fn parse_id(field: &str, path: &Path) -> Result<u32> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::DataIntegrity(format!("{}: bad integer id `{field}`", path.display())))
}

/// Writes one edge per line as `type<TAB>src<TAB>dst` using raw ids, with
/// `ub`, `bi` and `ui` blocks in that order.
pub fn export_edge_list(graph: &UbiGraph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let (users, baskets, items) = (graph.users(), graph.baskets(), graph.items());
    let mut write = |kind: &str, a: &str, b: &str| {
        writeln!(w, "{kind}\t{a}\t{b}").map_err(|e| Error::io(path, e))
    };
    for (u, b) in graph.edges_ub() {
        write("ub", users.id(u), baskets.id(b))?;
    }
    for (b, i) in graph.edges_bi() {
        write("bi", baskets.id(b), items.id(i))?;
    }
    for (u, i) in graph.edges_ui() {
        write("ui", users.id(u), items.id(i))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an edge list written by [`export_edge_list`] back into a transaction
/// log. `ui` lines are checked for consistency but otherwise ignored, since
/// user-item edges are derived.
pub fn read_edge_list(path: &Path) -> Result<TransactionLog> {
    let reader = BufReader::new(open(path)?);
    let mut owner: HashMap<String, String> = HashMap::new();
    let mut bi = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Invalid(format!(
                "{}:{}: expected 3 tab-separated fields",
                path.display(),
                n + 1
            )));
        }
        match fields[0] {
            "ub" => {
                owner.insert(fields[2].to_owned(), fields[1].to_owned());
            }
            "bi" => bi.push((fields[1].to_owned(), fields[2].to_owned())),
            "ui" => {}
            other => {
                return Err(Error::Invalid(format!(
                    "{}:{}: unknown edge type `{other}`",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    let mut records = Vec::with_capacity(bi.len());
    for (basket, item) in bi {
        let user = owner
            .get(&basket)
            .cloned()
            .ok_or_else(|| Error::DataIntegrity(format!("basket `{basket}` has no ub edge")))?;
        records.push(Transaction { user, basket, item });
    }
    TransactionLog::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_ubi_graph;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_and_dedups_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.csv",
            "user_id,basket_id,item_id\nu1,b1,i1\nu1,b1,i1\nu1,b1,i2\n",
        );
        let log = load_transactions(&p, &ColumnSpec::default()).unwrap();
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn tab_delimiter_and_custom_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.tsv", "who\tcart\twhat\nA\tc1\tx\nA\tc1\ty\n");
        let cols = ColumnSpec {
            user: "who".into(),
            basket: "cart".into(),
            item: "what".into(),
        };
        let log = load_transactions(&p, &cols).unwrap();
        assert_eq!(log.records()[1].item, "y");
    }

    #[test]
    fn header_only_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "user_id,basket_id,item_id\n");
        assert!(load_transactions(&p, &ColumnSpec::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn missing_column_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "user_id,order,item_id\nu,b,i\n");
        let err = load_transactions(&p, &ColumnSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("basket_id")));
    }

    #[test]
    fn conflicting_owner_names_basket() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.csv",
            "user_id,basket_id,item_id\nu1,b7,i1\nu2,b7,i2\n",
        );
        let err = load_transactions(&p, &ColumnSpec::default()).unwrap_err();
        assert!(err.to_string().contains("b7"));
    }

    #[test]
    fn instacart_join_and_prefilter() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "orders.csv",
            "order_id,user_id,eval_set,order_number,order_dow,order_hour_of_day,days_since_prior_order\n\
             1,10,prior,1,0,8,\n2,10,prior,2,1,9,3.0\n3,11,train,1,2,10,\n",
        );
        write(
            dir.path(),
            "order_products__prior.csv",
            "order_id,product_id,add_to_cart_order,reordered\n1,100,1,0\n1,101,2,0\n1,101,3,1\n2,100,1,1\n",
        );
        write(
            dir.path(),
            "order_products__train.csv",
            "order_id,product_id,add_to_cart_order,reordered\n3,102,1,0\n3,100,2,0\n",
        );
        let log = load_instacart(dir.path(), 2).unwrap();
        let baskets: Vec<_> = log.records().iter().map(|t| t.basket.as_str()).collect();
        assert_eq!(baskets, ["1", "1", "3", "3"]);
        assert_eq!(log.records()[2].user, "11");
    }

    #[test]
    fn edge_list_round_trip_is_isomorphic() {
        let log = TransactionLog::from_records((0..60).map(|k| Transaction {
            user: format!("u{}", (k / 6) % 4),
            basket: format!("b{}", k / 6),
            item: format!("i{}", (k * 7) % 13),
        }))
        .unwrap();
        let g = build_ubi_graph(&log, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edges.tsv");
        export_edge_list(&g, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.lines().all(|l| l.split('\t').count() == 3));
        let back = build_ubi_graph(&read_edge_list(&p).unwrap(), 1).unwrap();
        // Compare edge sets through raw ids.
        let raw = |g: &UbiGraph| {
            let mut e: Vec<(String, String, String)> = g
                .edges_bi()
                .map(|(b, i)| {
                    (
                        g.users().id(g.owner(b)).to_owned(),
                        g.baskets().id(b).to_owned(),
                        g.items().id(i).to_owned(),
                    )
                })
                .collect();
            e.sort();
            e
        };
        assert_eq!(raw(&g), raw(&back));
        assert_eq!(g.n_ui_edges(), back.n_ui_edges());
        assert_eq!(g, back);
    }
}
