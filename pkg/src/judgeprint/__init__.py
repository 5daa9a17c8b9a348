"""judgeprint: fingerprinting LLM evaluators from their structured
evaluation outputs — agreement, stability, disposition, evidence audits,
and attribution probes with canary controls."""

from .agreement import (AlphaReport, PairwiseAgreementReport, RaterMatrix,
                        UndefinedStatisticError, alpha_by_dimension,
                        krippendorff_interval, spearman_pairwise)
from .attribution import (AttributionReport, ClassifierConfig, FeatureRow, FoldPlan,
                          build_features, corpus_features, grouped_stratified_kfold,
                          leave_one_video_out, oracle_marginal_strip, permutation_test,
                          tokens_only_probe, train_eval)
from .capability import VariantDiagnostic, variant_diagnostics
from .corpus import (DIMENSIONS, GROUNDING_DIMENSIONS, BalanceReport, Corpus, CorpusError,
                     EvaluationRecord, Receipt, SourceDocument, SourcesUnavailableError,
                     balance_audit, compliance_filter, intersection_filter, load_corpus,
                     save_corpus)
from .nli import (CachingProvider, NLIProvider, NLIResult, NullProvider,
                  PrecomputedProvider, RemoteProvider, provider_from_config)
from .receipts import (AuditResult, EvidenceProfile, HumanAuditMetrics, ReceiptAudit,
                       audit_receipts, exact_match_variant, human_audit_compare,
                       linkage_supported, presence_match, source_preference)
from .reliability import (AnovaResult, HarshnessRow, HarshnessSummary, IccResult,
                          dimension_emphasis, harshness_profile_correlation,
                          harshness_rows, harshness_summary, icc31, temperature_anova)
from .synth import JudgeProfile, default_profiles, generate_corpus
from .textmatch import PresenceVerdict, normalize_text

__version__ = "0.1.0"
