"""Ablation arms executed through the Celery task in-process."""

from jrrelp.schemas.config import Ablation
from jrrelp.services.manifest import RunRecorder
from jrrelp.services.preprocess import write_prepared_corpus
from jrrelp.storage.artifact_store import ArtifactStore
from worker.tasks import dispatch_arms, run_ablation_arm


def _prepared_dir(tmp_path, corpus):
    store = ArtifactStore(tmp_path / "data")
    recorder = RunRecorder(store, "preprocess")
    write_prepared_corpus(recorder, corpus)
    recorder.finish()
    return store.root


def test_local_dispatch_returns_results_in_job_order(tmp_path, make_config, toy_corpus):
    data_dir = _prepared_dir(tmp_path, toy_corpus)
    config = make_config(epochs=1).model_dump(by_alias=True, mode="json")
    jobs = [(Ablation.BASELINE, 4), (Ablation.FULL, 4)]
    results = dispatch_arms(config, data_dir, jobs, mode="local")
    assert [(r.arm, r.seed) for r in results] == [("baseline", 4), ("full", 4)]
    assert all(r.status == "ok" for r in results)
    assert results[0].history.epochs[0].losses.l_kglp == 0.0


def test_task_payload_is_json(tmp_path, make_config, toy_corpus):
    data_dir = _prepared_dir(tmp_path, toy_corpus)
    config = make_config(epochs=1).model_dump(by_alias=True, mode="json")
    payload = run_ablation_arm.apply(args=(config, str(data_dir), "no_coupling", 0)).get()
    assert payload["arm"] == "no_coupling"
    assert isinstance(payload["f1"], float)
