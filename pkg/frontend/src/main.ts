// Browser entry: wires the pure state core to the DOM and the service API.
// One stream connection; HTTP mutations are fired per user action and folded
// back into the state as acks or reverts.

import { ApiError, ServiceClient, openStream } from './api.js';
import { drawChart } from './charts.js';
import { ANOMALY_CLASSES } from './records.js';
import {
  DashboardState,
  disconnected,
  eventSelected,
  applyRecord,
  initialState,
  labelAcked,
  labelEdited,
  labelRejected,
  renderModel,
  thresholdAcked,
  thresholdEdited,
  thresholdRejected,
} from './state.js';

const base = (window as any).GRIDWATCH_BASE ?? `http://${location.hostname}:8471`;
const client = new ServiceClient(base);
const operator = 'dashboard-operator';

let state: DashboardState = initialState();
let dirty = true;

function update(next: DashboardState) {
  state = next;
  dirty = true;
}

openStream(
  base,
  (record) => update(applyRecord(state, record)),
  (connected) => update(connected ? { ...state, connected } : disconnected(state)),
);

// also pull any events that closed before we connected
client
  .events(0)
  .then((body) => body.events.forEach((e) => update(applyRecord(state, { ...e, type: 'event_close' }))))
  .catch(() => undefined);

const channelNames = ['voltage (V)', 'current (A)', 'sin angle diff', 'frequency (Hz)'];
const app = document.getElementById('app')!;
app.innerHTML = `
  <header>
    <h1>gridwatch operator console</h1>
    <span id="status" class="status"></span>
    <span id="drops" class="muted"></span>
    <div class="threshold-box">
      <label>threshold T <input id="threshold-slider" type="range" min="1" max="30" step="0.5"/></label>
      <input id="threshold-value" type="number" min="0.5" step="0.5" style="width:4.5em"/>
      <button id="threshold-apply">apply</button>
      <span id="threshold-state" class="muted"></span>
    </div>
  </header>
  <main>
    <section class="charts">
      <h2>live channels</h2>
      <div id="raw-charts"></div>
      <h2>residual scores <span class="muted">(log scale, threshold dashed, events marked)</span></h2>
      <canvas id="score-chart" width="860" height="160"></canvas>
      <div id="cond-charts"></div>
    </section>
    <section class="events">
      <h2>events</h2>
      <table id="event-table">
        <thead><tr><th>id</th><th>start</th><th>triggers</th><th>label</th><th>source</th></tr></thead>
        <tbody></tbody>
      </table>
      <div id="detail"></div>
    </section>
  </main>
`;

const rawHost = document.getElementById('raw-charts')!;
const condHost = document.getElementById('cond-charts')!;
const rawCanvases = channelNames.map((name) => {
  const canvas = document.createElement('canvas');
  canvas.width = 860;
  canvas.height = 90;
  canvas.title = name;
  rawHost.appendChild(canvas);
  return canvas;
});
const condCanvases = ['cond V', 'cond I', 'cond sin', 'cond F'].map((name) => {
  const canvas = document.createElement('canvas');
  canvas.width = 860;
  canvas.height = 70;
  canvas.title = name;
  condHost.appendChild(canvas);
  return canvas;
});

const slider = document.getElementById('threshold-slider') as HTMLInputElement;
const thresholdValue = document.getElementById('threshold-value') as HTMLInputElement;
const applyButton = document.getElementById('threshold-apply') as HTMLButtonElement;

slider.addEventListener('input', () => (thresholdValue.value = slider.value));
applyButton.addEventListener('click', () => submitThreshold(parseFloat(thresholdValue.value)));

function submitThreshold(value: number) {
  update(thresholdEdited(state, value, Date.now()));
  client
    .setThreshold(value, operator)
    .then((ack) => update(thresholdAcked(state, ack.value)))
    .catch((err: ApiError) => update(thresholdRejected(state, err.message)));
}

function submitLabel(eventId: number, cls: string) {
  update(labelEdited(state, eventId, cls));
  client
    .labelEvent(eventId, cls, operator)
    .then((ack) => update(labelAcked(state, eventId, cls, ack.label.labeled_at)))
    .catch((err: ApiError) => update(labelRejected(state, eventId, err.message)));
}

function selectEvent(eventId: number) {
  client
    .eventDetail(eventId)
    .then((detail) => update(eventSelected(state, eventId, { ...detail, type: 'event' }, null)))
    .catch((err: ApiError) => update(eventSelected(state, eventId, null, err.message)));
}

function paint() {
  requestAnimationFrame(paint);
  if (!dirty) return;
  dirty = false;
  const model = renderModel(state);

  const statusEl = document.getElementById('status')!;
  statusEl.textContent = model.status.connected ? (model.status.live ? 'live' : 'stream ended') : 'reconnecting…';
  statusEl.className = `status ${model.status.connected ? 'ok' : 'bad'}`;
  document.getElementById('drops')!.textContent =
    model.status.droppedScores > 0 ? `${model.status.droppedScores} score records dropped` : '';

  const thresholdState = document.getElementById('threshold-state')!;
  if (model.status.thresholdError !== null) {
    thresholdState.textContent = `rejected: ${model.status.thresholdError}`;
    thresholdState.className = 'bad';
  } else if (model.status.pendingThreshold !== null) {
    thresholdState.textContent = `pending ${model.status.pendingThreshold}…`;
    thresholdState.className = 'muted';
  } else {
    thresholdState.textContent = model.status.threshold !== null ? `applied: ${model.status.threshold}` : '';
    thresholdState.className = 'muted';
  }
  if (document.activeElement !== slider && document.activeElement !== thresholdValue && model.status.threshold !== null) {
    slider.value = String(model.status.threshold);
    thresholdValue.value = String(model.status.threshold);
  }

  model.charts.raw.forEach((series, k) =>
    drawChart(rawCanvases[k], series.points, {
      markers: model.charts.eventMarkers,
      gaps: model.charts.gapBands,
      yLabel: channelNames[k],
      color: '#98c379',
    }),
  );
  drawChart(document.getElementById('score-chart') as HTMLCanvasElement, model.charts.score.points, {
    thresholdY: model.charts.thresholdLine,
    markers: model.charts.eventMarkers,
    gaps: model.charts.gapBands,
    logY: true,
  });
  model.charts.conditionals.forEach((series, k) =>
    drawChart(condCanvases[k], series.points, {
      thresholdY: model.charts.thresholdLine,
      gaps: model.charts.gapBands,
      logY: true,
      color: '#c678dd',
    }),
  );

  const tbody = document.querySelector('#event-table tbody')!;
  tbody.innerHTML = model.eventList
    .map(
      (e) => `
      <tr data-id="${e.id}" class="${state.selectedId === e.id ? 'selected' : ''}">
        <td>${e.id}</td><td>${e.start.slice(11, 19)}</td>
        <td>${e.triggerSet.join(', ')}</td>
        <td>${e.classLabel ?? '—'}</td><td>${e.labelSource ?? ''}</td>
      </tr>`,
    )
    .join('');
  tbody.querySelectorAll('tr').forEach((row) =>
    row.addEventListener('click', () => selectEvent(parseInt(row.dataset.id!, 10))),
  );

  const detailEl = document.getElementById('detail')!;
  if (state.detailError !== null) {
    detailEl.innerHTML = `<p class="bad">event fetch failed: ${state.detailError}</p>`;
  } else if (model.detail === null) {
    detailEl.innerHTML = '<p class="muted">select an event for its windows, features and decision path</p>';
  } else {
    const d = model.detail;
    const labelButtons = ANOMALY_CLASSES.map(
      (cls) => `<button class="label-btn" data-cls="${cls}" data-id="${d.id}">${cls}</button>`,
    ).join(' ');
    detailEl.innerHTML = `
      <h3>event ${d.id} <span class="muted">triggers: ${d.triggerSet.join(', ')} | scored on ${d.featureChannel} | ${
        d.returned ? 'returned to normal' : 'did not return in window'
      }</span></h3>
      <p>label: <b>${d.classLabel ?? 'unlabeled'}</b> (${d.labelSource ?? 'none'})
         ${d.labelError !== null ? `<span class="bad">rejected: ${d.labelError}</span>` : ''}</p>
      <p>relabel: ${labelButtons}</p>
      <canvas id="detail-score" width="420" height="120"></canvas>
      <canvas id="detail-raw" width="420" height="120"></canvas>
      <details open><summary>features (18)</summary>
        <table class="kv">${d.features.map(([k, v]) => `<tr><td>${k}</td><td>${Number(v).toPrecision(5)}</td></tr>`).join('')}</table>
      </details>
      <details open><summary>decision path</summary>
        <ol>${d.decisionPath
          .map((s) => `<li>feature[${s.feature_index}] ${s.went_left ? '&lt;' : '&ge;'} ${s.threshold.toPrecision(5)}</li>`)
          .join('')}</ol>
        <p class="muted">leaf: ${Object.entries(d.leafHistogram)
          .map(([c, n]) => `${c}:${n}`)
          .join(', ')}</p>
      </details>
    `;
    drawChart(document.getElementById('detail-score') as HTMLCanvasElement, d.scoreWindow, {
      thresholdY: d.threshold,
      yLabel: 'score',
    });
    drawChart(
      document.getElementById('detail-raw') as HTMLCanvasElement,
      d.rawWindow.map((row, i) => ({ t: i, y: row[0] })),
      { yLabel: 'V raw', color: '#98c379' },
    );
    detailEl.querySelectorAll('.label-btn').forEach((btn) =>
      btn.addEventListener('click', () =>
        submitLabel(parseInt((btn as HTMLElement).dataset.id!, 10), (btn as HTMLElement).dataset.cls!),
      ),
    );
  }
}

requestAnimationFrame(paint);
