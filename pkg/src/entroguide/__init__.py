"""Entropy-guided strong/weak agent collaboration engine and benchmark harness."""

from .agents import (AgentProfile, ChatRole, ChatTurn, RemoteEndpoint,
                     RoleBinding, ScriptedSource, Strategy, Strength, Verdict,
                     binding_for, build_role_prompt, generate, make_backend,
                     verify)
from .bench import (BenchReport, MetricCell, compute_metrics, render_report,
                    run_batch, stratified_sample)
from .engine import (RoundRecord, SessionConfig, SessionMode,
                     SessionTranscript, build_record, run_session)
from .entropy import (EntropyReport, TaskKind, TokenDistribution,
                      UncertaintyLexicon, WeightMatrix, coherence_entropy,
                      expression_entropy, relevance_entropy, structure_entropy,
                      tokenize, uncertainty_entropy, understanding_entropy)
from .policy import (GuidanceLevel, GuidanceMessage, PolicyConstants,
                     ThresholdState, adjustment, compose_guidance_request,
                     parse_guidance_reply, select_level, update_thresholds)
from .store import (ExperienceRecord, ExperienceStore, RetrievalHit,
                    VectorizerState, classify_difficulty)
from .tasks import (CodeReference, Difficulty, MathReference, SandboxConfig,
                    TaskInstance, check_code, check_math, load_dataset)
from .routing import (RoutingInstance, evaluate_route, generate_instance,
                      parse_route, solve_optimal)

__version__ = "0.1.0"
