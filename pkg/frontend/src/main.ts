/** Page entry: open a session, subscribe to its stream, mount the panel. */

import { PanelApi } from './api.js';
import { subscribe } from './sse.js';
import { PanelModel } from './viewmodel.js';
import { mountPanel } from './panel.js';

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const api = new PanelApi(params.get('service') ?? '');
  const root = document.querySelector('.panel') as HTMLElement;

  const model = await PanelModel.open(api);
  mountPanel(root, model);
  await model.resync();

  const abort = new AbortController();
  addEventListener('beforeunload', () => abort.abort());
  subscribe(api.streamUrl(model.sessionId), (event) => model.handleEvent(event), abort.signal).catch(
    (error) => {
      model.banner = { tone: 'error', text: `stream lost: ${error}` };
    },
  );
}

void boot();
