/** Plain-DOM list view. The view model is the contract; this layer only
 * draws it and forwards button clicks to the session. */

import { ConsoleSession } from "./console.js";
import { decodeAction, encodeAction } from "./types.js";
import { ConsoleViewModel, countdownMs, pendingDecisions } from "./viewmodel.js";

const TYPE_NAMES = ["medical", "fire", "rescue", "logistics"];

function el(tag: string, cls: string, text = ""): HTMLElement {
  const node = document.createElement(tag);
  node.className = cls;
  if (text) node.textContent = text;
  return node;
}

export function render(root: HTMLElement, vm: ConsoleViewModel, session: ConsoleSession): void {
  root.replaceChildren();

  const header = el("div", "header");
  header.append(
    el("span", `conn conn-${vm.connection}`, vm.connection),
    el("span", "clock", `t+${(vm.simTimeMs / 1000).toFixed(0)}s`),
    el("span", "alerts", `${vm.alerts.length} alerts`),
  );
  root.append(header);

  const incidents = el("section", "incidents");
  incidents.append(el("h2", "", "Incidents"));
  for (const inc of [...vm.incidents.values()].sort((a, b) =>
    a.incidentId.localeCompare(b.incidentId))) {
    const card = el("div", `incident status-${inc.status}`);
    card.append(
      el("div", "title", `${inc.incidentId} (${inc.region})`),
      el("div", "severity", `severity ${inc.severity.toFixed(1)}`),
      el("div", "unmet",
         `needs: ${inc.unmet.map((n, i) => n ? `${n} ${TYPE_NAMES[i]}` : "")
                            .filter(Boolean).join(", ") || "none"}`),
    );
    const band = vm.forecasts.get(inc.incidentId);
    if (band) card.append(sparkline(band.mean, band.lo, band.hi));
    incidents.append(card);
  }
  root.append(incidents);

  const decisions = el("section", "decisions");
  decisions.append(el("h2", "", "Pending decisions"));
  for (const d of pendingDecisions(vm)) {
    const target = decodeAction(d.action);
    const row = el("div", "decision");
    row.append(
      el("span", "what",
         target
           ? `dispatch ${TYPE_NAMES[target.type]} to ${d.incidentId}`
           : "stand down"),
      el("span", "countdown", `${(countdownMs(d, vm) / 1000).toFixed(0)}s left`),
    );
    const approve = el("button", "approve", "Approve") as HTMLButtonElement;
    approve.onclick = () => session.sendDirective(d.decisionId, "Approve");
    row.append(approve);
    if (target) {
      for (let r = 0; r < TYPE_NAMES.length; r++) {
        if (r === target.type) continue;
        const alt = el("button", "override",
                       `Send ${TYPE_NAMES[r]} instead`) as HTMLButtonElement;
        alt.onclick = () =>
          session.sendDirective(d.decisionId, "Override",
                                encodeAction(r, target.slot));
        row.append(alt);
      }
    }
    const send = vm.directives.get(d.decisionId);
    if (send) row.append(el("span", `send-${send.state}`,
                            send.reason ?? send.state));
    decisions.append(row);
  }
  root.append(decisions);

  const resolved = el("section", "resolved");
  resolved.append(el("h2", "", "Resolved"));
  for (const d of [...vm.decisions.values()]
    .filter((d) => d.status !== "Pending")
    .sort((a, b) => a.decisionId.localeCompare(b.decisionId))) {
    resolved.append(el("div", `resolved-row status-${d.status}`,
                       `${d.decisionId}: ${d.status}`));
  }
  root.append(resolved);
}

function sparkline(mean: number[], lo: number[], hi: number[]): HTMLElement {
  const w = 120;
  const h = 28;
  const n = mean.length;
  const x = (i: number) => (i / Math.max(1, n - 1)) * w;
  const y = (v: number) => h - (Math.max(0, Math.min(10, v)) / 10) * h;
  const pts = (vals: number[]) => vals.map((v, i) => `${x(i)},${y(v)}`).join(" ");
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("width", String(w));
  svg.setAttribute("height", String(h));
  svg.setAttribute("class", "forecast");
  const band = document.createElementNS(svg.namespaceURI, "polygon");
  band.setAttribute("points",
    `${pts(hi)} ${[...lo].reverse().map((v, i) => `${x(n - 1 - i)},${y(v)}`).join(" ")}`);
  band.setAttribute("class", "ci-band");
  const line = document.createElementNS(svg.namespaceURI, "polyline");
  line.setAttribute("points", pts(mean));
  line.setAttribute("class", "ci-mean");
  line.setAttribute("fill", "none");
  svg.append(band, line);
  const wrap = el("div", "sparkline");
  wrap.append(svg);
  return wrap;
}
