"""Reference numbers from pycocotools for the evaluator tests.

Regenerate with:  python3 make_fixtures.py   (needs numpy + pycocotools)
"""
import contextlib
import io
import json
import random

import numpy as np
from pycocotools import mask as mu
from pycocotools.coco import COCO
from pycocotools.cocoeval import COCOeval


def blob(rng, h, w):
    m = np.zeros((h, w), dtype=np.uint8)
    for _ in range(rng.randint(1, 3)):
        bh, bw = rng.randint(2, max(2, h // 2)), rng.randint(2, max(2, w // 2))
        y, x = rng.randint(0, h - bh), rng.randint(0, w - bw)
        m[y:y + bh, x:x + bw] = 1
    return m


def jitter(rng, m):
    out = np.roll(m, (rng.randint(-2, 2), rng.randint(-2, 2)), axis=(0, 1))
    if rng.random() < 0.3:
        out[rng.randint(0, m.shape[0] - 1), :] = 1
    return out


def encode(m):
    r = mu.encode(np.asfortranarray(m))
    r["counts"] = r["counts"].decode("ascii")
    return r


def uncompressed(m):
    flat = np.asfortranarray(m).flatten(order="F")
    counts, cur, run = [], 0, 0
    for v in flat:
        if v != cur:
            counts.append(run)
            cur, run = v, 0
        run += 1
    counts.append(run)
    return {"size": [int(m.shape[0]), int(m.shape[1])], "counts": [int(c) for c in counts]}


def make_case(rng, max_dets):
    images, anns, dets = [], [], []
    ann_id = 1
    for img_id in rng.sample(range(1, 50), rng.randint(1, 5)):
        h, w = rng.randint(8, 32), rng.randint(8, 32)
        images.append({"id": img_id, "width": w, "height": h, "file_name": f"{img_id}.png"})
        gts = [blob(rng, h, w) for _ in range(rng.randint(0, 6))]
        for g in gts:
            anns.append({"id": ann_id, "image_id": img_id, "category_id": 1, "iscrowd": 0,
                         "area": int(g.sum()), "bbox": [0, 0, 1, 1], "segmentation": uncompressed(g)})
            ann_id += 1
        preds = [jitter(rng, g) for g in gts if rng.random() < 0.8]
        preds += [blob(rng, h, w) for _ in range(rng.randint(0, 3))]
        rng.shuffle(preds)
        for p in preds:
            if p.sum() == 0:
                continue
            score = round(rng.random(), 1) if rng.random() < 0.4 else rng.random()
            dets.append({"image_id": img_id, "category_id": 1, "score": score, "segmentation": encode(p)})
    if not anns:
        return None
    gt = {"images": images, "annotations": anns, "categories": [{"id": 1, "name": "tree crown"}]}

    coco = COCO()
    coco.dataset = json.loads(json.dumps(gt))
    with contextlib.redirect_stdout(io.StringIO()):
        coco.createIndex()
        dt = coco.loadRes(json.loads(json.dumps(dets))) if dets else COCO()
        if not dets:
            dt.dataset = {"images": images, "annotations": [], "categories": gt["categories"]}
            dt.createIndex()
        ev = COCOeval(coco, dt, "segm")
        ev.params.maxDets = [1, 10, max_dets] if max_dets > 10 else [1, max_dets - 1, max_dets]
        ev.evaluate()
        ev.accumulate()
    prec = ev.eval["precision"][:, :, 0, 0, 2]
    aps = [float(np.mean(p[p > -1])) if (p > -1).any() else -1.0 for p in prec]

    # results file: mix compressed and uncompressed counts
    for d in dets:
        if rng.random() < 0.5:
            d["segmentation"] = uncompressed(mu.decode(
                {"size": d["segmentation"]["size"], "counts": d["segmentation"]["counts"].encode()}))
    return {"gt": gt, "dt": dets, "max_dets": max_dets, "per_threshold_ap": aps}


def main():
    rng = random.Random(2024)
    cases = []
    while len(cases) < 40:
        c = make_case(rng, 100 if len(cases) % 4 else 3)
        if c:
            cases.append(c)
    with open("pycocotools_cases.json", "w") as f:
        json.dump({"cases": cases}, f)

    strings = []
    for _ in range(40):
        h, w = rng.randint(1, 120), rng.randint(1, 120)
        m = (np.random.default_rng(rng.randint(0, 10**9)).random((h, w)) < rng.random()).astype(np.uint8)
        strings.append({"list": uncompressed(m), "string": encode(m)})
    with open("rle_strings.json", "w") as f:
        json.dump(strings, f)


if __name__ == "__main__":
    main()
