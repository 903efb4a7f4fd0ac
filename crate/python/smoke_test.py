"""Smoke test for the pose_dtw extension module.

Build and install first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import math

import pose_dtw


def main():
    assert (pose_dtw.DEFAULT_WINDOW, pose_dtw.DEFAULT_UPSILON, pose_dtw.DEFAULT_EPSILON) == (30, 8.0, 0.8)

    seqs, manifest = pose_dtw.synth(identities=4, conditions=4, frames=40, seed=3)
    assert len(seqs) == 16 and len(seqs[0]) == 40
    assert manifest["intra_max"] < manifest["delta_sep"] / 2 <= manifest["inter_min"] / 2

    a, b = seqs[0], seqs[1]
    assert a.id == b.id and a.condition_tag != b.condition_tag

    self_match = pose_dtw.dtw(a, a, with_path=True)
    assert self_match["distance"] == 0.0
    assert self_match["path"][0] == (1, 1) and self_match["path"][-1] == (40, 40)

    d = pose_dtw.dtw(a, seqs[4])["distance"]
    assert pose_dtw.lb_kim(a, seqs[4]) <= d
    assert pose_dtw.dtw(a, seqs[4], upsilon=d / 2)["abandoned"]
    assert pose_dtw.s_out(40, 40, 30) == 90

    # a sequence rebuilt from its own frames is the same sequence
    copy = pose_dtw.PoseSequence("copy", "cam", "x", a.frames(), frame_rate=25)
    assert pose_dtw.dtw(a, copy)["distance"] == 0.0
    assert math.isclose(copy.norm_series()[0], a.norm_series()[0])

    queries = [s for s in seqs if s.condition_tag == "clothesA-RGB"]
    gallery = [s for s in seqs if s.condition_tag != "clothesA-RGB"]
    ranked = pose_dtw.match_query(queries[0], gallery)
    assert ranked["entries"][0]["gallery_id"] == queries[0].id

    report = pose_dtw.evaluate(queries, gallery)
    assert report["rank_k"]["1"] == 1.0 and report["mAP"] == 1.0

    cfg = pose_dtw.MatchConfig(w=None, upsilon=math.inf, epsilon=math.inf)
    full = pose_dtw.measure_cost(queries, gallery, "none", cfg)
    assert full["measured_cells"] == len(queries) * len(gallery) * 40 * 40

    print("pose_dtw smoke test passed:", report["rank_k"], "mAP", report["mAP"])


if __name__ == "__main__":
    main()
