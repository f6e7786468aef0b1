// Weekly reveal timeline: one bar per week bucket, newest on the left;
// clicking a bar lists that week's revealing transactions beneath it.

import { clear, el, shortHash } from "./dom.js";
import type { RevealTimeline, WeeklyBucket } from "./types.js";

const BAR_UNIT_PX = 24;

export function renderTimeline(
  container: HTMLElement,
  timeline: RevealTimeline,
): void {
  clear(container);

  container.append(el("div", { class: "timeline-stats" }, [
    el("span", { "data-testid": "reveal-count" },
       [`${timeline.stats.reveal_count} potential reveals`]),
    el("span", { class: "population" },
       [` (average user: ${timeline.stats.population_mean.toFixed(2)})`]),
  ]));

  if (timeline.weekly_buckets.length === 0) {
    container.append(
      el("p", { class: "empty-state", "data-testid": "no-reveals" },
         ["No revealing transactions."]),
    );
    return;
  }

  const chart = el("div", { class: "timeline-chart", "data-testid": "chart" });
  const details = el("div", { class: "timeline-details", "data-testid": "details" });

  for (const bucket of timeline.weekly_buckets) {
    const bar = el("div", {
      class: "timeline-bar",
      "data-week": String(bucket.week_index),
      "data-count": String(bucket.reveals.length),
    });
    bar.style.height = `${bucket.reveals.length * BAR_UNIT_PX}px`;
    bar.title = `${bucket.reveals.length} reveals, ${bucket.week_index} weeks ago`;
    bar.addEventListener("click", () => showWeek(details, bucket));
    chart.append(el("div", { class: "timeline-column" }, [
      bar,
      el("div", { class: "timeline-label" }, [`wk ${bucket.week_index}`]),
    ]));
  }

  container.append(chart, details);
}

function showWeek(details: HTMLElement, bucket: WeeklyBucket): void {
  clear(details);
  details.append(el("h3", {}, [`${bucket.week_index} weeks ago`]));
  for (const reveal of bucket.reveals) {
    details.append(el("div", { class: "reveal-row" }, [
      el("span", { class: "reveal-kind" }, [reveal.kind]),
      el("span", { class: "reveal-pool" }, [reveal.pool_id]),
      el("span", { class: "reveal-heuristic" }, [reveal.heuristic]),
      el("span", { class: "reveal-conf" }, [reveal.confidence.toFixed(2)]),
      el("span", { class: "reveal-tx" }, [shortHash(reveal.tx_hash)]),
    ]));
  }
}
