//! Variable filtering, enrichment and the clustering baseline.

pub mod anova;
pub mod clustering;
pub mod enrichment;
pub mod special;

pub use anova::{
    anova_tsv, filter_positive, parse_probe_table, two_way_anova, AnovaRecord, ProbeBlock, DEFAULT_THRESHOLD,
};
pub use clustering::{ward_cluster, ward_linkage, Dendrogram, Merge};
pub use enrichment::{
    binomial_lower_tail, binomial_tail, enrich, enrichment_record, enrichment_tsv, parse_annotation_pairs, ranked_top,
    select_top, AnnotationMap, Direction, EnrichmentRecord,
};
pub use special::f_upper_tail;
