use crate::colgraph::GraphPool;
use crate::error::Result;
use crate::nn::Network;
use crate::table::LabelSpace;

/// ψ⁽⁰⁾ and ψ of every column in `pool`, one TSV line each:
/// `table_id  column  label  stage  v0 v1 ...`.
pub fn embeddings_tsv(net: &Network, pool: &GraphPool, cta: Option<&LabelSpace>) -> Result<String> {
    let mut out = String::from("table_id\tcolumn\tlabel\tstage\tvector\n");
    let clean = |s: &str| s.replace(['\t', '\n'], " ");
    for entry in &pool.entries {
        let refined = net.struct_embedding(&entry.graph)?;
        for (node, psi) in refined.iter().enumerate() {
            let label = entry
                .cta
                .as_ref()
                .and_then(|l| l[node])
                .and_then(|o| cta.and_then(|s| s.label(o)))
                .unwrap_or("");
            let column = entry.graph.column_index[node];
            let table_id = clean(&entry.graph.table_id);
            for (stage, values) in [("initial", entry.graph.features.row(node)), ("refined", &psi.values[..])] {
                let joined: Vec<String> = values.iter().map(|v| format!("{v:.6}")).collect();
                out.push_str(&format!("{table_id}\t{column}\t{}\t{stage}\t{}\n", clean(label), joined.join(" ")));
            }
        }
    }
    Ok(out)
}
